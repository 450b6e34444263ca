//! Paired coefficient draws as a long table,
//! `draw_id,model,coef_name,value`.

use std::collections::BTreeMap;
use std::path::Path;

use agrotrend_core::resample::{Model, PairedDraws};
use agrotrend_core::weather::WeatherCoefs;
use agrotrend_core::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DrawSet {
    pub stock_names: Vec<String>,
    pub weather_names: Vec<String>,
    pub draw_ids: Vec<u64>,
    /// `[draw][coef]`
    pub stock: Vec<Vec<f64>>,
    pub weather: Vec<Vec<f64>>,
}

impl DrawSet {
    pub fn from_paired(p: &PairedDraws) -> Self {
        Self {
            stock_names: p.stock_names.clone(),
            weather_names: p.weather_names.clone(),
            draw_ids: p.draws.iter().map(|d| d.draw_id).collect(),
            stock: p.draws.iter().map(|d| d.stock.values.clone()).collect(),
            weather: p.draws.iter().map(|d| d.weather.values.clone()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.draw_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draw_ids.is_empty()
    }

    pub fn column(&self, model: Model, name: &str) -> Result<Vec<f64>> {
        let (names, rows) = match model {
            Model::Stock => (&self.stock_names, &self.stock),
            Model::Weather => (&self.weather_names, &self.weather),
        };
        let j = names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::MissingCovariate(format!("{model}:{name}")))?;
        Ok(rows.iter().map(|r| r[j]).collect())
    }

    pub fn beta1(&self) -> Result<Vec<f64>> {
        self.column(Model::Stock, "log_S")
    }

    pub fn weather_coefs(&self, df: usize) -> Result<Vec<WeatherCoefs>> {
        self.weather.iter().map(|v| WeatherCoefs::from_named(&self.weather_names, v, df)).collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut rows = Vec::new();
        for (k, id) in self.draw_ids.iter().enumerate() {
            for (model, names, values) in
                [("stock", &self.stock_names, &self.stock[k]), ("weather", &self.weather_names, &self.weather[k])]
            {
                for (n, v) in names.iter().zip(values) {
                    rows.push([id.to_string(), model.to_string(), n.clone(), v.to_string()]);
                }
            }
        }
        agrotrend_core::io::write_table(path, &["draw_id", "model", "coef_name", "value"], rows)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let parse_err = |line: u64, msg: String| Error::Parse { file: path.into(), line, msg };
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::Io { context: format!("opening {}", path.display()), source: io },
                other => parse_err(0, format!("{other:?}")),
            })?;
        let header = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
        if header.iter().collect::<Vec<_>>() != ["draw_id", "model", "coef_name", "value"] {
            return Err(parse_err(1, "header must be draw_id,model,coef_name,value".into()));
        }
        // per draw: (stock, weather) name/value lists in file order
        type Cols = Vec<(String, f64)>;
        let mut by_draw: BTreeMap<u64, (Cols, Cols)> = BTreeMap::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
            let line = rec.position().map_or(0, |p| p.line());
            let id: u64 = rec[0].parse().map_err(|_| parse_err(line, format!("draw_id {:?}", &rec[0])))?;
            let model: Model = rec[1].parse().map_err(|_| parse_err(line, format!("model {:?}", &rec[1])))?;
            let value: f64 = rec[3].parse().map_err(|_| parse_err(line, format!("value {:?}", &rec[3])))?;
            if !value.is_finite() {
                return Err(parse_err(line, "value is not finite".into()));
            }
            let entry = by_draw.entry(id).or_default();
            let list = match model {
                Model::Stock => &mut entry.0,
                Model::Weather => &mut entry.1,
            };
            if list.iter().any(|(n, _)| n == &rec[2]) {
                return Err(parse_err(line, format!("duplicate {model}:{} in draw {id}", &rec[2])));
            }
            list.push((rec[2].to_string(), value));
        }
        let Some((_, (s0, w0))) = by_draw.iter().next() else {
            return Err(Error::Validation(format!("{}: no draws", path.display())));
        };
        let stock_names: Vec<String> = s0.iter().map(|(n, _)| n.clone()).collect();
        let weather_names: Vec<String> = w0.iter().map(|(n, _)| n.clone()).collect();
        let mut out = Self { stock_names, weather_names, draw_ids: Vec::new(), stock: Vec::new(), weather: Vec::new() };
        for (id, (s, w)) in by_draw {
            let same = |a: &Cols, names: &[String]| a.len() == names.len() && a.iter().zip(names).all(|((x, _), y)| x == y);
            if !same(&s, &out.stock_names) || !same(&w, &out.weather_names) {
                return Err(Error::Validation(format!("{}: draw {id} has a different coefficient set", path.display())));
            }
            out.draw_ids.push(id);
            out.stock.push(s.into_iter().map(|(_, v)| v).collect());
            out.weather.push(w.into_iter().map(|(_, v)| v).collect());
        }
        Ok(out)
    }
}
