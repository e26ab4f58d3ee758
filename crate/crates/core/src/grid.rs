//! Space-time observation grid `X_{t_i}(y_k)` with `t_i = i T / N`,
//! `y_k = b + k (1 - 2b) / M`, and its CSV / JSON file formats.

use std::io::{BufRead, Write};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulator::{ModelSpec, SimConfig};

/// Counts, horizon and boundary margin of a regular grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridShape {
    /// Number of spatial steps; locations run over `k = 0..=m`.
    pub m: usize,
    /// Number of time steps; times run over `i = 0..=n`.
    pub n: usize,
    /// Time horizon.
    pub t: f64,
    /// Boundary margin in `[0, 1/2)`.
    #[serde(default)]
    pub b: f64,
}

impl GridShape {
    pub fn new(m: usize, n: usize, t: f64, b: f64) -> Result<Self> {
        let s = Self { m, n, t, b };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::Domain(format!(
                "grid needs M >= 1 and N >= 1, got M = {}, N = {}",
                self.m, self.n
            )));
        }
        if !(self.t > 0.0) || !self.t.is_finite() {
            return Err(Error::Domain(format!("horizon T must be positive, got {}", self.t)));
        }
        if !(0.0..0.5).contains(&self.b) {
            return Err(Error::Domain(format!("margin b must lie in [0, 1/2), got {}", self.b)));
        }
        Ok(())
    }

    /// Spatial step `delta = (1 - 2b) / M`.
    pub fn delta(&self) -> f64 {
        (1.0 - 2.0 * self.b) / self.m as f64
    }

    /// Time step `Delta = T / N`.
    pub fn big_delta(&self) -> f64 {
        self.t / self.n as f64
    }

    pub fn y(&self, k: usize) -> f64 {
        self.b + k as f64 * self.delta()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t * (i as f64 / self.n as f64)
    }

    pub fn locations(&self) -> Vec<f64> {
        (0..=self.m).map(|k| self.y(k)).collect()
    }

    /// `delta / sqrt(Delta)`.
    pub fn balance_ratio(&self) -> f64 {
        self.delta() / self.big_delta().sqrt()
    }
}

/// Provenance recorded by the simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SimulationInfo {
    /// Number of modes simulated explicitly.
    pub cutoff_used: usize,
    /// Whether modes above the cutoff were added as an aliased white tail.
    pub tail_compensated: bool,
    /// Burn-in time run before recording, if any.
    pub burn_in: Option<f64>,
    /// The burn-in length is a relaxation-time heuristic, not an exact
    /// stationary draw.
    pub burn_in_heuristic: bool,
}

/// Sampled field values, `values[[i, k]] = X_{t_i}(y_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationGrid {
    pub shape: GridShape,
    pub values: Array2<f64>,
    /// `X_0 = 0`; estimators then drop the terms that only involve row 0.
    pub zero_init: bool,
    pub seed: Option<u64>,
    pub info: Option<SimulationInfo>,
}

impl ObservationGrid {
    pub fn new(shape: GridShape, values: Array2<f64>) -> Result<Self> {
        shape.validate()?;
        if values.dim() != (shape.n + 1, shape.m + 1) {
            return Err(Error::Contract(format!(
                "values must be {}x{}, got {:?}",
                shape.n + 1,
                shape.m + 1,
                values.dim()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("field values must be finite".into()));
        }
        if shape.b == 0.0 {
            let edge = values
                .column(0)
                .iter()
                .chain(values.column(shape.m).iter())
                .any(|&v| v != 0.0);
            if edge {
                return Err(Error::Contract(
                    "with b = 0 the columns at y = 0 and y = 1 must vanish".into(),
                ));
            }
        }
        let zero_init = values.row(0).iter().all(|&v| v == 0.0);
        Ok(Self {
            shape,
            values,
            zero_init,
            seed: None,
            info: None,
        })
    }

    /// Builds a grid from rows `i = 0..=N` of equal length `M + 1`.
    pub fn from_rows(rows: Vec<Vec<f64>>, t: f64, b: f64) -> Result<Self> {
        if rows.len() < 2 || rows[0].len() < 2 {
            return Err(Error::Contract("need at least two rows and two columns".into()));
        }
        let (n, m) = (rows.len() - 1, rows[0].len() - 1);
        if rows.iter().any(|r| r.len() != m + 1) {
            return Err(Error::Contract("rows have different lengths".into()));
        }
        let shape = GridShape::new(m, n, t, b)?;
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        let values = Array2::from_shape_vec((n + 1, m + 1), flat).map_err(|e| Error::Contract(e.to_string()))?;
        Self::new(shape, values)
    }

    pub fn m(&self) -> usize {
        self.shape.m
    }

    pub fn n(&self) -> usize {
        self.shape.n
    }

    #[inline]
    pub fn at(&self, i: usize, k: usize) -> f64 {
        self.values[[i, k]]
    }

    /// Restricts a `b = 0` grid to the sub-grid with margin `b`, `m` spatial
    /// and `n` temporal steps over the same horizon.
    pub fn sample_observations(&self, b: f64, m: usize, n: usize) -> Result<ObservationGrid> {
        if self.shape.b != 0.0 {
            return Err(Error::Alignment("source grid must have b = 0".into()));
        }
        let target = GridShape::new(m, n, self.shape.t, b)?;
        let src_m = self.shape.m as f64;
        let offset = b * src_m;
        let stride = target.delta() * src_m;
        let (k0, ks) = (offset.round(), stride.round());
        if (offset - k0).abs() > 1e-9 || (stride - ks).abs() > 1e-9 || ks < 1.0 {
            return Err(Error::Alignment(format!(
                "margin {b} and spatial step {} are not multiples of 1/{}",
                target.delta(),
                self.shape.m
            )));
        }
        if !self.shape.n.is_multiple_of(n) {
            return Err(Error::Alignment(format!(
                "N' = {n} does not divide N = {}",
                self.shape.n
            )));
        }
        let (k0, ks) = (k0 as usize, ks as usize);
        let ts = self.shape.n / n;
        if k0 + m * ks > self.shape.m {
            return Err(Error::Alignment("target grid exceeds the source grid".into()));
        }
        let values = Array2::from_shape_fn((n + 1, m + 1), |(i, k)| self.values[[i * ts, k0 + k * ks]]);
        Ok(ObservationGrid {
            shape: target,
            values,
            zero_init: self.zero_init,
            seed: self.seed,
            info: self.info.clone(),
        })
    }

    /// Multiplies every value by `c`.
    pub fn scaled(&self, c: f64) -> ObservationGrid {
        let mut g = self.clone();
        g.values.mapv_inplace(|v| v * c);
        g
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "t\\y")?;
        for k in 0..=self.shape.m {
            write!(w, ",{:.16e}", self.shape.y(k))?;
        }
        writeln!(w)?;
        for i in 0..=self.shape.n {
            write!(w, "{:.16e}", self.shape.time(i))?;
            for v in self.values.row(i) {
                write!(w, ",{:.16e}", v)?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<ObservationGrid> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty grid file".into()))??;
        let mut cells = header.split(',');
        if cells.next().map(str::trim) != Some("t\\y") {
            return Err(Error::Parse("grid header must start with `t\\y`".into()));
        }
        let ys = cells.map(parse_f64).collect::<Result<Vec<_>>>()?;
        if ys.len() < 2 {
            return Err(Error::Parse("grid header needs at least two locations".into()));
        }
        let mut times = Vec::new();
        let mut rows = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut cells = line.split(',');
            times.push(parse_f64(cells.next().unwrap_or(""))?);
            let row = cells.map(parse_f64).collect::<Result<Vec<_>>>()?;
            if row.len() != ys.len() {
                return Err(Error::Parse(format!(
                    "row {} has {} values, header has {}",
                    rows.len(),
                    row.len(),
                    ys.len()
                )));
            }
            rows.push(row);
        }
        if rows.len() < 2 {
            return Err(Error::Parse("grid needs at least two time rows".into()));
        }
        let shape = GridShape::new(ys.len() - 1, rows.len() - 1, *times.last().unwrap(), ys[0])?;
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        let values = Array2::from_shape_vec((shape.n + 1, shape.m + 1), flat)
            .map_err(|e| Error::Parse(e.to_string()))?;
        ObservationGrid::new(shape, values)
    }

    pub fn to_envelope(&self, model: Option<&ModelSpec>, config: Option<&SimConfig>) -> GridEnvelope {
        GridEnvelope {
            model: model.cloned(),
            config: config.cloned(),
            grid: GridMeta {
                m: self.shape.m,
                n: self.shape.n,
                t: self.shape.t,
                b: self.shape.b,
                zero_init: self.zero_init,
                seed: self.seed,
                info: self.info.clone(),
            },
            values: self.values.rows().into_iter().map(|r| r.to_vec()).collect(),
        }
    }

    pub fn to_json(&self, model: Option<&ModelSpec>, config: Option<&SimConfig>) -> Result<String> {
        Ok(serde_json::to_string(&self.to_envelope(model, config))?)
    }

    pub fn from_envelope(env: GridEnvelope) -> Result<ObservationGrid> {
        let shape = GridShape::new(env.grid.m, env.grid.n, env.grid.t, env.grid.b)?;
        if env.values.len() != shape.n + 1 || env.values.iter().any(|r| r.len() != shape.m + 1) {
            return Err(Error::Parse("values do not match the grid counts".into()));
        }
        let flat: Vec<f64> = env.values.into_iter().flatten().collect();
        let values = Array2::from_shape_vec((shape.n + 1, shape.m + 1), flat)
            .map_err(|e| Error::Parse(e.to_string()))?;
        let mut g = ObservationGrid::new(shape, values)?;
        g.zero_init = env.grid.zero_init;
        g.seed = env.grid.seed;
        g.info = env.grid.info;
        Ok(g)
    }

    pub fn from_json(s: &str) -> Result<ObservationGrid> {
        Self::from_envelope(serde_json::from_str(s)?)
    }

    /// Reads `.json` envelopes or CSV depending on the extension.
    pub fn load(path: &std::path::Path) -> Result<ObservationGrid> {
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&std::fs::read_to_string(path)?)
        } else {
            let f = std::fs::File::open(path)?;
            Self::read_csv(std::io::BufReader::new(f))
        }
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|e| Error::Parse(format!("`{s}`: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub m: usize,
    pub n: usize,
    pub t: f64,
    pub b: f64,
    #[serde(default)]
    pub zero_init: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub info: Option<SimulationInfo>,
}

/// JSON file layout `{model, config, grid, values}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridEnvelope {
    #[serde(default)]
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub config: Option<SimConfig>,
    pub grid: GridMeta,
    pub values: Vec<Vec<f64>>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_grid() -> ObservationGrid {
        let shape = GridShape::new(4, 3, 0.3, 0.0).unwrap();
        let values = Array2::from_shape_fn((4, 5), |(i, k)| {
            if k == 0 || k == 4 {
                0.0
            } else {
                (i as f64 + 1.0) / 3.0 + (k as f64).sqrt() * 1e-3
            }
        });
        ObservationGrid::new(shape, values).unwrap()
    }

    #[test]
    fn steps_are_recomputable() {
        let s = GridShape::new(20, 400, 1.0, 0.1).unwrap();
        assert_eq!(s.delta(), 0.8 / 20.0);
        assert_eq!(s.big_delta(), 1.0 / 400.0);
        assert_eq!(s.time(400), 1.0);
        assert!(GridShape::new(20, 400, 1.0, 0.5).is_err());
        assert!(GridShape::new(0, 400, 1.0, 0.1).is_err());
    }

    #[test]
    fn dirichlet_columns_enforced() {
        let shape = GridShape::new(2, 1, 1.0, 0.0).unwrap();
        let values = Array2::from_elem((2, 3), 1.0);
        assert!(matches!(ObservationGrid::new(shape, values), Err(Error::Contract(_))));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let g = sample_grid();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t\\y,"));
        let back = ObservationGrid::read_csv(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(back.values, g.values);
        assert_eq!(back.shape, g.shape);
    }

    #[test]
    fn restriction_to_interior() {
        let shape = GridShape::new(8, 4, 1.0, 0.0).unwrap();
        let values = Array2::from_shape_fn((5, 9), |(i, k)| {
            if k == 0 || k == 8 {
                0.0
            } else {
                (10 * i + k) as f64
            }
        });
        let g = ObservationGrid::new(shape, values).unwrap();
        assert_eq!(g.sample_observations(0.0, 8, 4).unwrap().values, g.values);
        let sub = g.sample_observations(0.25, 4, 2).unwrap();
        assert_eq!(sub.shape.delta(), 0.125);
        assert_eq!(sub.values.dim(), (3, 5));
        assert_eq!(sub.at(1, 0), 22.0);
        assert_eq!(sub.at(2, 4), 46.0);
        assert!(matches!(g.sample_observations(0.1, 4, 2), Err(Error::Alignment(_))));
        assert!(matches!(g.sample_observations(0.0, 8, 3), Err(Error::Alignment(_))));
    }
}
