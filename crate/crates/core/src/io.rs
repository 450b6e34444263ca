//! CSV readers and writers for every on-disk table.
//!
//! All files are UTF-8 with a header row and `.` decimal separators. Values
//! are written with Rust's shortest round-trip float formatting, so a
//! load → write → load cycle is bit-identical.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::exposure::{DailyGrid, DayObs, ExposureHistogramSeries, MonthlyExposure, SpatialWeights};
use crate::project::Ssp;
use crate::series::AnnualSeries;

struct Rows {
    path: PathBuf,
    rows: Vec<(u64, csv::StringRecord)>,
}

fn open_rows(path: &Path, header: &[&str]) -> Result<Rows> {
    let file = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(file);
    let got = rdr
        .headers()
        .map_err(|e| Error::Parse { file: path.into(), line: 1, msg: e.to_string() })?
        .clone();
    let got: Vec<&str> = got.iter().collect();
    if got != header {
        return Err(Error::Parse {
            file: path.into(),
            line: 1,
            msg: format!("header {:?}, expected {:?}", got.join(","), header.join(",")),
        });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            file: path.into(),
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        rows.push((line, rec));
    }
    Ok(Rows { path: path.into(), rows })
}

impl Rows {
    fn err(&self, line: u64, msg: impl Into<String>) -> Error {
        Error::Parse { file: self.path.clone(), line, msg: msg.into() }
    }

    fn field<T: std::str::FromStr>(&self, line: u64, rec: &csv::StringRecord, i: usize, what: &str) -> Result<T> {
        let s = rec.get(i).ok_or_else(|| self.err(line, format!("missing field `{what}`")))?;
        s.parse().map_err(|_| self.err(line, format!("cannot parse `{what}` from {s:?}")))
    }

    fn real(&self, line: u64, rec: &csv::StringRecord, i: usize, what: &str) -> Result<f64> {
        let v: f64 = self.field(line, rec, i, what)?;
        if !v.is_finite() {
            return Err(self.err(line, format!("`{what}` is not finite")));
        }
        Ok(v)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        }
    }
    let f = File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    Ok(BufWriter::new(f))
}

fn wio(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::io(format!("writing {}", path.display()), e)
}

/// Writes a CSV table with the given header and pre-formatted rows.
pub fn write_table<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = create(path)?;
    writeln!(w, "{}", header.join(",")).map_err(wio(path))?;
    for r in rows {
        let fields: Vec<String> = r.into_iter().collect();
        writeln!(w, "{}", fields.join(",")).map_err(wio(path))?;
    }
    w.flush().map_err(wio(path))
}

/// Reads a two-column `year,<value_col>` file.
pub fn read_annual(path: &Path, value_col: &str, label: &str) -> Result<AnnualSeries> {
    let rows = open_rows(path, &["year", value_col])?;
    let mut seen: BTreeMap<i32, u64> = BTreeMap::new();
    let mut pairs = Vec::with_capacity(rows.rows.len());
    for (line, rec) in &rows.rows {
        let year: i32 = rows.field(*line, rec, 0, "year")?;
        if let Some(prev) = seen.insert(year, *line) {
            return Err(rows.err(*line, format!("duplicate year {year} (first on line {prev})")));
        }
        pairs.push((year, rows.real(*line, rec, 1, value_col)?));
    }
    AnnualSeries::from_pairs(label, pairs).map_err(|e| match e {
        Error::Validation(m) => Error::Validation(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn write_annual(path: &Path, value_col: &str, s: &AnnualSeries) -> Result<()> {
    write_table(path, &["year", value_col], s.iter().map(|(y, v)| [y.to_string(), v.to_string()]))
}

fn edges_from_bins(rows: &Rows, line: u64, bins: &[(i32, i32)]) -> Result<Vec<i32>> {
    let mut edges = vec![bins[0].0];
    for (lo, hi) in bins {
        if *lo != *edges.last().unwrap() || hi <= lo {
            return Err(rows.err(line, format!("bins not contiguous at [{lo},{hi})")));
        }
        edges.push(*hi);
    }
    Ok(edges)
}

/// Reads `year,bin_lo_c,bin_hi_c,hours`.
pub fn read_exposure(path: &Path) -> Result<ExposureHistogramSeries> {
    let rows = open_rows(path, &["year", "bin_lo_c", "bin_hi_c", "hours"])?;
    let mut by_year: BTreeMap<i32, (u64, Vec<(i32, i32, f64)>)> = BTreeMap::new();
    for (line, rec) in &rows.rows {
        let year: i32 = rows.field(*line, rec, 0, "year")?;
        let lo: i32 = rows.field(*line, rec, 1, "bin_lo_c")?;
        let hi: i32 = rows.field(*line, rec, 2, "bin_hi_c")?;
        let h = rows.real(*line, rec, 3, "hours")?;
        let entry = by_year.entry(year).or_insert((*line, Vec::new()));
        if entry.1.iter().any(|b| b.0 == lo) {
            return Err(rows.err(*line, format!("duplicate bin {lo} in year {year}")));
        }
        entry.1.push((lo, hi, h));
    }
    let Some((&first_year, _)) = by_year.iter().next() else {
        return Err(Error::Validation(format!("{}: no exposure rows", path.display())));
    };
    let mut edges: Option<Vec<i32>> = None;
    let mut hours = Vec::new();
    let mut expect = first_year;
    for (year, (line, mut bins)) in by_year {
        if year != expect {
            return Err(Error::Validation(format!("{}: exposure gap before year {year}", path.display())));
        }
        expect += 1;
        bins.sort_by_key(|b| b.0);
        let pairs: Vec<(i32, i32)> = bins.iter().map(|b| (b.0, b.1)).collect();
        let e = edges_from_bins(&rows, line, &pairs)?;
        match &edges {
            None => edges = Some(e),
            Some(prev) if *prev != e => {
                return Err(rows.err(line, format!("year {year} uses different bins")));
            }
            _ => {}
        }
        hours.push(bins.iter().map(|b| b.2).collect());
    }
    ExposureHistogramSeries::new(edges.unwrap(), first_year, hours)
}

pub fn write_exposure(path: &Path, s: &ExposureHistogramSeries) -> Result<()> {
    let e = s.edges();
    let rows = s.years().zip(s.rows()).flat_map(|(y, row)| {
        row.iter()
            .enumerate()
            .map(move |(k, h)| [y.to_string(), e[k].to_string(), e[k + 1].to_string(), h.to_string()])
            .collect::<Vec<_>>()
    });
    write_table(path, &["year", "bin_lo_c", "bin_hi_c", "hours"], rows)
}

/// Reads `year,month,bin_lo_c,bin_hi_c,hours` plus `year,month,precip_mm`.
pub fn read_monthly(exposure: &Path, precip: &Path) -> Result<MonthlyExposure> {
    let rows = open_rows(exposure, &["year", "month", "bin_lo_c", "bin_hi_c", "hours"])?;
    let mut cells: BTreeMap<(i32, u32), Vec<(i32, i32, f64)>> = BTreeMap::new();
    let mut last_line = 0;
    for (line, rec) in &rows.rows {
        last_line = *line;
        let year: i32 = rows.field(*line, rec, 0, "year")?;
        let month: u32 = rows.field(*line, rec, 1, "month")?;
        if !(1..=12).contains(&month) {
            return Err(rows.err(*line, format!("month {month}")));
        }
        let lo: i32 = rows.field(*line, rec, 2, "bin_lo_c")?;
        let hi: i32 = rows.field(*line, rec, 3, "bin_hi_c")?;
        let h = rows.real(*line, rec, 4, "hours")?;
        let v = cells.entry((year, month)).or_default();
        if v.iter().any(|b| b.0 == lo) {
            return Err(rows.err(*line, format!("duplicate bin {lo} in {year}-{month:02}")));
        }
        v.push((lo, hi, h));
    }
    let prows = open_rows(precip, &["year", "month", "precip_mm"])?;
    let mut pcells: BTreeMap<(i32, u32), f64> = BTreeMap::new();
    for (line, rec) in &prows.rows {
        let year: i32 = prows.field(*line, rec, 0, "year")?;
        let month: u32 = prows.field(*line, rec, 1, "month")?;
        if pcells.insert((year, month), prows.real(*line, rec, 2, "precip_mm")?).is_some() {
            return Err(prows.err(*line, format!("duplicate {year}-{month:02}")));
        }
    }
    let (first, last) = match (cells.keys().next(), cells.keys().last()) {
        (Some(a), Some(b)) => (a.0, b.0),
        _ => return Err(Error::Validation(format!("{}: no rows", exposure.display()))),
    };
    let mut edges: Option<Vec<i32>> = None;
    let mut hours = Vec::new();
    let mut precip_out = Vec::new();
    for year in first..=last {
        let mut months: [Vec<f64>; 12] = Default::default();
        let mut p = [0.0; 12];
        for m in 1..=12u32 {
            let mut bins = cells
                .remove(&(year, m))
                .ok_or_else(|| Error::Validation(format!("{}: missing {year}-{m:02}", exposure.display())))?;
            bins.sort_by_key(|b| b.0);
            let pairs: Vec<(i32, i32)> = bins.iter().map(|b| (b.0, b.1)).collect();
            let e = edges_from_bins(&rows, last_line, &pairs)?;
            match &edges {
                None => edges = Some(e),
                Some(prev) if *prev != e => {
                    return Err(Error::Validation(format!("{year}-{m:02} uses different bins")));
                }
                _ => {}
            }
            months[m as usize - 1] = bins.iter().map(|b| b.2).collect();
            p[m as usize - 1] = *pcells
                .get(&(year, m))
                .ok_or_else(|| Error::Validation(format!("{}: missing {year}-{m:02}", precip.display())))?;
        }
        hours.push(months);
        precip_out.push(p);
    }
    MonthlyExposure::new(edges.unwrap(), first, hours, precip_out)
}

pub fn write_monthly(exposure: &Path, precip: &Path, m: &MonthlyExposure) -> Result<()> {
    let e = m.edges();
    let mut rows = Vec::new();
    for (i, months) in m.hours().iter().enumerate() {
        let y = m.start_year() + i as i32;
        for (mi, row) in months.iter().enumerate() {
            for (k, h) in row.iter().enumerate() {
                rows.push([y.to_string(), (mi + 1).to_string(), e[k].to_string(), e[k + 1].to_string(), h.to_string()]);
            }
        }
    }
    write_table(exposure, &["year", "month", "bin_lo_c", "bin_hi_c", "hours"], rows)?;
    let prow = m.precip().iter().enumerate().flat_map(|(i, ps)| {
        let y = m.start_year() + i as i32;
        ps.iter()
            .enumerate()
            .map(move |(mi, p)| [y.to_string(), (mi + 1).to_string(), p.to_string()])
            .collect::<Vec<_>>()
    });
    write_table(precip, &["year", "month", "precip_mm"], prow)
}

/// Reads `cell_id,date,tmin_c,tmax_c,prcp_mm`. Cells are ordered by id.
pub fn read_grid_daily(path: &Path) -> Result<DailyGrid> {
    let rows = open_rows(path, &["cell_id", "date", "tmin_c", "tmax_c", "prcp_mm"])?;
    let mut by_cell: BTreeMap<String, BTreeMap<NaiveDate, (u64, DayObs)>> = BTreeMap::new();
    for (line, rec) in &rows.rows {
        let cell: String = rows.field(*line, rec, 0, "cell_id")?;
        let date: NaiveDate = rows.field(*line, rec, 1, "date")?;
        let obs = DayObs {
            tmin: rows.real(*line, rec, 2, "tmin_c")?,
            tmax: rows.real(*line, rec, 3, "tmax_c")?,
            prcp: rows.real(*line, rec, 4, "prcp_mm")?,
        };
        if obs.tmin > obs.tmax {
            return Err(rows.err(*line, format!("tmin {} > tmax {}", obs.tmin, obs.tmax)));
        }
        if by_cell.entry(cell.clone()).or_default().insert(date, (*line, obs)).is_some() {
            return Err(rows.err(*line, format!("duplicate day {date} for cell {cell}")));
        }
    }
    let mut first: Option<NaiveDate> = None;
    let mut cells = Vec::new();
    let mut obs = Vec::new();
    for (cell, days) in by_cell {
        let d0 = *days.keys().next().unwrap();
        let f = *first.get_or_insert(d0);
        if d0 != f {
            return Err(Error::Validation(format!("cell {cell} starts {d0}, others {f}")));
        }
        let mut v = Vec::with_capacity(days.len());
        for (i, (date, (line, o))) in days.into_iter().enumerate() {
            if date != f + chrono::Days::new(i as u64) {
                return Err(rows.err(line, format!("cell {cell}: day gap before {date}")));
            }
            v.push(o);
        }
        cells.push(cell);
        obs.push(v);
    }
    let first = first.ok_or_else(|| Error::Validation(format!("{}: no rows", path.display())))?;
    DailyGrid::new(cells, first, obs)
}

pub fn write_grid_daily(path: &Path, grid: &DailyGrid) -> Result<()> {
    let mut rows = Vec::new();
    for (ci, cell) in grid.cells().iter().enumerate() {
        for (d, o) in grid.cell_obs(ci).iter().enumerate() {
            rows.push([
                cell.clone(),
                grid.date(d).to_string(),
                o.tmin.to_string(),
                o.tmax.to_string(),
                o.prcp.to_string(),
            ]);
        }
    }
    write_table(path, &["cell_id", "date", "tmin_c", "tmax_c", "prcp_mm"], rows)
}

/// Reads `cell_id,weight`.
pub fn read_weights(path: &Path) -> Result<SpatialWeights> {
    let rows = open_rows(path, &["cell_id", "weight"])?;
    let mut w = BTreeMap::new();
    for (line, rec) in &rows.rows {
        let cell: String = rows.field(*line, rec, 0, "cell_id")?;
        let v = rows.real(*line, rec, 1, "weight")?;
        if w.insert(cell.clone(), v).is_some() {
            return Err(rows.err(*line, format!("duplicate cell {cell}")));
        }
    }
    SpatialWeights::new(w)
}

pub fn write_weights(path: &Path, w: &SpatialWeights) -> Result<()> {
    write_table(path, &["cell_id", "weight"], w.iter().map(|(c, v)| [c.to_string(), v.to_string()]))
}

/// Paired exposure/precipitation files of one scenario member.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioFiles {
    pub ssp: Ssp,
    pub gcm: String,
    pub exposure: PathBuf,
    pub precip: PathBuf,
}

/// Finds `scenario_<ssp>_<gcm>_exposure.csv` / `..._precip.csv` pairs in `dir`,
/// sorted by scenario then GCM.
pub fn scan_scenarios(dir: &Path) -> Result<Vec<ScenarioFiles>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(format!("listing {}", dir.display()), e))?;
    let mut found = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(format!("listing {}", dir.display()), e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        let Some(stem) = name.strip_prefix("scenario_").and_then(|s| s.strip_suffix("_exposure.csv")) else {
            continue;
        };
        let Some((ssp, gcm)) = stem.split_once('_') else {
            return Err(Error::Validation(format!("cannot parse scenario file name {name}")));
        };
        let precip = dir.join(format!("scenario_{ssp}_{gcm}_precip.csv"));
        let ssp: Ssp = ssp.parse()?;
        if !precip.exists() {
            return Err(Error::Validation(format!("missing paired precipitation file {}", precip.display())));
        }
        found.push(ScenarioFiles { ssp, gcm: gcm.to_string(), exposure: entry.path(), precip });
    }
    found.sort_by(|a, b| (a.ssp, &a.gcm).cmp(&(b.ssp, &b.gcm)));
    Ok(found)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn annual_round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rd.csv");
        let s = AnnualSeries::new("rd", 1900, vec![0.1, 1.0 / 3.0, 2.5e-17, 12345.678901234567]).unwrap();
        write_annual(&p, "spend_b2020usd", &s).unwrap();
        let back = read_annual(&p, "spend_b2020usd", "rd").unwrap();
        assert_eq!(back, s);
        let p2 = dir.path().join("rd2.csv");
        write_annual(&p2, "spend_b2020usd", &back).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn malformed_row_cites_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("tfp.csv");
        std::fs::write(&p, "year,tfp_index\n1950,1.0\n1951,abc\n").unwrap();
        match read_annual(&p, "tfp_index", "tfp") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicate_year_names_year() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rd.csv");
        std::fs::write(&p, "year,spend_b2020usd\n1950,1.0\n1951,2\n1951,3\n").unwrap();
        let e = read_annual(&p, "spend_b2020usd", "rd").unwrap_err();
        assert!(e.to_string().contains("1951"), "{e}");
    }

    #[test]
    fn wrong_header_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rd.csv");
        std::fs::write(&p, "yr,spend\n1950,1.0\n").unwrap();
        assert!(matches!(read_annual(&p, "spend_b2020usd", "rd"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn exposure_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("exposure.csv");
        let s = ExposureHistogramSeries::new(vec![-1, 0, 1, 3], 2000, vec![vec![1.5, 2.0, 0.1], vec![0.0, 3.0, 1e-9]])
            .unwrap();
        write_exposure(&p, &s).unwrap();
        assert_eq!(read_exposure(&p).unwrap(), s);
    }
}
