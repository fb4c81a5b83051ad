//! Balanced panel data model, CSV ingestion, and cross-sectional averaging.
//!
//! Panels are long-format CSV (one row per unit-time pair). Ingestion is
//! strict: every unit must be observed in exactly the same periods, every
//! cell must parse to a finite number, and duplicates are errors. Unit and
//! time order is canonical (numeric if every label parses as a number, else
//! lexicographic), so a row shuffle of the input yields an identical dataset.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::matops::Matrix;

/// Column-name mapping for long-format CSV files.
///
/// `x` lists the regressor columns; when `None`, every column other than
/// unit/time/y is taken as a regressor, in header order.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub unit: String,
    pub time: String,
    pub y: String,
    pub x: Option<Vec<String>>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            unit: "unit".to_string(),
            time: "time".to_string(),
            y: "y".to_string(),
            x: None,
        }
    }
}

/// A balanced N x T panel: per-unit outcome vector and T x k regressor block.
///
/// Immutable after construction; all invariants (balance, finiteness,
/// N >= 2, T >= 2, k >= 1) are enforced by the constructor.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    unit_ids: Vec<String>,
    time_ids: Vec<String>,
    regressor_names: Vec<String>,
    y: Vec<DVector<f64>>,
    x: Vec<Matrix>,
}

impl PanelDataset {
    /// Build a panel from per-unit data. Units are stored in canonical
    /// order (numeric when every id parses as a number, else lexicographic),
    /// so permuting the input units yields a bit-identical dataset; time ids
    /// are taken in the given order and define the row order of every block.
    pub fn new(
        mut unit_ids: Vec<String>,
        time_ids: Vec<String>,
        regressor_names: Vec<String>,
        mut y: Vec<DVector<f64>>,
        mut x: Vec<Matrix>,
    ) -> Result<Self> {
        let n = unit_ids.len();
        let t = time_ids.len();
        let k = regressor_names.len();
        if n < 2 {
            return Err(Error::InvalidConfig(format!("panel needs N >= 2 units, got {n}")));
        }
        if t < 2 {
            return Err(Error::InvalidConfig(format!("panel needs T >= 2 periods, got {t}")));
        }
        if k < 1 {
            return Err(Error::InvalidConfig("panel needs k >= 1 regressors".to_string()));
        }
        if y.len() != n || x.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "expected {n} outcome vectors and regressor blocks, got {} and {}",
                y.len(),
                x.len()
            )));
        }
        for (i, (yi, xi)) in y.iter().zip(x.iter()).enumerate() {
            if yi.len() != t || xi.nrows() != t || xi.ncols() != k {
                return Err(Error::DimensionMismatch(format!(
                    "unit {} has y of length {} and X of shape {}x{}, expected {t} and {t}x{k}",
                    unit_ids[i],
                    yi.len(),
                    xi.nrows(),
                    xi.ncols()
                )));
            }
            if !yi.iter().all(|v| v.is_finite()) || !xi.iter().all(|v| v.is_finite()) {
                return Err(Error::MissingValue {
                    unit: unit_ids[i].clone(),
                    time: "<any>".to_string(),
                    column: "<non-finite>".to_string(),
                });
            }
        }
        for (ids, what) in [(&unit_ids, "unit"), (&time_ids, "time")] {
            let mut seen = ids.clone();
            seen.sort();
            seen.dedup();
            if seen.len() != ids.len() {
                return Err(Error::InvalidConfig(format!("duplicate {what} ids")));
            }
        }

        // canonical unit order
        let mut order: Vec<usize> = (0..n).collect();
        let numeric = unit_ids.iter().all(|s| s.trim().parse::<f64>().is_ok());
        order.sort_by(|&a, &b| {
            if numeric {
                let fa: f64 = unit_ids[a].trim().parse().unwrap();
                let fb: f64 = unit_ids[b].trim().parse().unwrap();
                fa.partial_cmp(&fb)
                    .unwrap()
                    .then_with(|| unit_ids[a].cmp(&unit_ids[b]))
            } else {
                unit_ids[a].cmp(&unit_ids[b])
            }
        });
        if order.iter().enumerate().any(|(pos, &idx)| pos != idx) {
            let reorder_strings = |v: &mut Vec<String>| {
                let old = std::mem::take(v);
                let mut slots: Vec<Option<String>> = old.into_iter().map(Some).collect();
                *v = order.iter().map(|&i| slots[i].take().unwrap()).collect();
            };
            reorder_strings(&mut unit_ids);
            let mut y_slots: Vec<Option<DVector<f64>>> = y.into_iter().map(Some).collect();
            y = order.iter().map(|&i| y_slots[i].take().unwrap()).collect();
            let mut x_slots: Vec<Option<Matrix>> = x.into_iter().map(Some).collect();
            x = order.iter().map(|&i| x_slots[i].take().unwrap()).collect();
        }

        Ok(PanelDataset {
            unit_ids,
            time_ids,
            regressor_names,
            y,
            x,
        })
    }

    pub fn n(&self) -> usize {
        self.unit_ids.len()
    }

    pub fn t(&self) -> usize {
        self.time_ids.len()
    }

    pub fn k(&self) -> usize {
        self.regressor_names.len()
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.unit_ids
    }

    pub fn time_ids(&self) -> &[String] {
        &self.time_ids
    }

    pub fn regressor_names(&self) -> &[String] {
        &self.regressor_names
    }

    /// Outcome vector (length T) of unit `i`.
    pub fn y(&self, i: usize) -> &DVector<f64> {
        &self.y[i]
    }

    /// T x k regressor block of unit `i`.
    pub fn x(&self, i: usize) -> &Matrix {
        &self.x[i]
    }
}

/// Cross-sectional sample averages of the regressor blocks and outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossSectionMeans {
    /// T x k matrix whose row t averages row t of the per-unit X blocks.
    pub x_bar: Matrix,
    /// T-vector averaging the per-unit outcome vectors.
    pub y_bar: DVector<f64>,
}

/// X_bar = N^{-1} sum_i X_i, y_bar = N^{-1} sum_i y_i.
pub fn cross_section_means(ds: &PanelDataset) -> CrossSectionMeans {
    let n = ds.n() as f64;
    let mut x_bar = Matrix::zeros(ds.t(), ds.k());
    let mut y_bar = DVector::zeros(ds.t());
    for i in 0..ds.n() {
        x_bar += ds.x(i);
        y_bar += ds.y(i);
    }
    CrossSectionMeans {
        x_bar: x_bar / n,
        y_bar: y_bar / n,
    }
}

/// Sort labels numerically when every label parses as a number, otherwise
/// lexicographically.
fn canonical_order(labels: &mut [String]) {
    let all_numeric = labels.iter().all(|s| s.trim().parse::<f64>().is_ok());
    if all_numeric {
        labels.sort_by(|a, b| {
            let fa: f64 = a.trim().parse().unwrap();
            let fb: f64 = b.trim().parse().unwrap();
            fa.partial_cmp(&fb).unwrap().then_with(|| a.cmp(b))
        });
    } else {
        labels.sort();
    }
}

/// Load a long-format CSV into a balanced panel.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<PanelDataset> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.to_string()).collect();

    let col_index = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::SchemaMismatch(format!("column '{name}' not found in header")))
    };
    let unit_idx = col_index(&schema.unit)?;
    let time_idx = col_index(&schema.time)?;
    let y_idx = col_index(&schema.y)?;

    let x_names: Vec<String> = match &schema.x {
        Some(names) => names.clone(),
        None => headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != unit_idx && *i != time_idx && *i != y_idx)
            .map(|(_, h)| h.clone())
            .collect(),
    };
    if x_names.is_empty() {
        return Err(Error::SchemaMismatch(
            "no regressor columns (need at least one x column)".to_string(),
        ));
    }
    let x_idx: Vec<usize> = x_names.iter().map(|n| col_index(n)).collect::<Result<_>>()?;

    // unit -> time -> (y, xs); maps keep the result independent of row order
    let mut cells: BTreeMap<String, BTreeMap<String, (f64, Vec<f64>)>> = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        let unit = record.get(unit_idx).unwrap_or("").trim().to_string();
        let time = record.get(time_idx).unwrap_or("").trim().to_string();
        let parse = |idx: usize, column: &str| -> Result<f64> {
            let raw = record.get(idx).unwrap_or("").trim();
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::MissingValue {
                    unit: unit.clone(),
                    time: time.clone(),
                    column: column.to_string(),
                }),
            }
        };
        let yv = parse(y_idx, &schema.y)?;
        let xv: Vec<f64> = x_idx
            .iter()
            .zip(x_names.iter())
            .map(|(&idx, name)| parse(idx, name))
            .collect::<Result<_>>()?;
        let unit_map = cells.entry(unit.clone()).or_default();
        if unit_map.insert(time.clone(), (yv, xv)).is_some() {
            return Err(Error::DuplicateObservation { unit, time });
        }
    }

    let mut unit_ids: Vec<String> = cells.keys().cloned().collect();
    canonical_order(&mut unit_ids);
    if unit_ids.is_empty() {
        return Err(Error::SchemaMismatch("empty data file".to_string()));
    }

    // time grid = periods of the first unit; every unit must match exactly
    let mut time_ids: Vec<String> = cells[&unit_ids[0]].keys().cloned().collect();
    canonical_order(&mut time_ids);
    let t = time_ids.len();
    for unit in &unit_ids {
        let observed = &cells[unit];
        if observed.len() != t || !time_ids.iter().all(|tm| observed.contains_key(tm)) {
            return Err(Error::UnbalancedPanel {
                unit: unit.clone(),
                found: observed.len(),
                expected: t,
            });
        }
    }

    let k = x_names.len();
    let mut y = Vec::with_capacity(unit_ids.len());
    let mut x = Vec::with_capacity(unit_ids.len());
    for unit in &unit_ids {
        let mut yi = DVector::zeros(t);
        let mut xi = Matrix::zeros(t, k);
        for (ti, tm) in time_ids.iter().enumerate() {
            let (yv, xv) = &cells[unit][tm];
            yi[ti] = *yv;
            for (j, v) in xv.iter().enumerate() {
                xi[(ti, j)] = *v;
            }
        }
        y.push(yi);
        x.push(xi);
    }

    PanelDataset::new(unit_ids, time_ids, x_names, y, x)
}

/// Write a panel as long-format CSV, rows sorted by (unit, time), one row
/// streamed at a time. Floats are printed with shortest round-trip
/// formatting, so `load_csv(write_csv(ds))` reproduces values bit-exactly.
pub fn write_csv(ds: &PanelDataset, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut writer = std::io::BufWriter::new(file);
    write!(writer, "unit,time,y")?;
    for name in ds.regressor_names() {
        write!(writer, ",{name}")?;
    }
    writeln!(writer)?;
    for i in 0..ds.n() {
        for t in 0..ds.t() {
            write!(writer, "{},{},{}", ds.unit_ids()[i], ds.time_ids()[t], ds.y(i)[t])?;
            for j in 0..ds.k() {
                write!(writer, ",{}", ds.x(i)[(t, j)])?;
            }
            writeln!(writer)?;
        }
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::SmallRng;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        use std::io::Write;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn small_panel() -> PanelDataset {
        PanelDataset::new(
            vec!["1".into(), "2".into()],
            vec!["1".into(), "2".into(), "3".into()],
            vec!["x1".into()],
            vec![
                DVector::from_column_slice(&[1.0, 2.0, 3.0]),
                DVector::from_column_slice(&[4.0, 5.0, 6.0]),
            ],
            vec![
                Matrix::from_column_slice(3, 1, &[0.1, 0.2, 0.3]),
                Matrix::from_column_slice(3, 1, &[0.4, 0.5, 0.6]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn load_two_by_three() {
        let f = write_tmp("unit,time,y,x1\n1,1,1.0,0.1\n1,2,2.0,0.2\n1,3,3.0,0.3\n2,1,4.0,0.4\n2,2,5.0,0.5\n2,3,6.0,0.6\n");
        let ds = load_csv(f.path(), &CsvSchema::default()).unwrap();
        assert_eq!((ds.n(), ds.t(), ds.k()), (2, 3, 1));
        assert_eq!(ds.y(0)[2], 3.0);
        assert_eq!(ds.x(1)[(1, 0)], 0.5);
    }

    #[test]
    fn load_rejects_unbalanced() {
        let f = write_tmp("unit,time,y,x1\n1,1,1.0,0.1\n1,2,2.0,0.2\n1,3,3.0,0.3\n2,1,4.0,0.4\n2,2,5.0,0.5\n");
        let err = load_csv(f.path(), &CsvSchema::default()).unwrap_err();
        assert!(matches!(err, Error::UnbalancedPanel { .. }), "{err}");
    }

    #[test]
    fn load_rejects_duplicates_and_missing() {
        let f = write_tmp("unit,time,y,x1\n1,1,1.0,0.1\n1,1,2.0,0.2\n");
        assert!(matches!(
            load_csv(f.path(), &CsvSchema::default()),
            Err(Error::DuplicateObservation { .. })
        ));
        let f = write_tmp("unit,time,y,x1\n1,1,,0.1\n1,2,2.0,0.2\n2,1,1.0,0.1\n2,2,2.0,0.2\n");
        assert!(matches!(
            load_csv(f.path(), &CsvSchema::default()),
            Err(Error::MissingValue { .. })
        ));
        let f = write_tmp("id,time,y,x1\n1,1,1.0,0.1\n");
        assert!(matches!(
            load_csv(f.path(), &CsvSchema::default()),
            Err(Error::SchemaMismatch(_))
        ));
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = SmallRng::seed_from_u64(5);
        let n = 7;
        let t = 4;
        let k = 2;
        let ds = PanelDataset::new(
            (1..=n).map(|i| i.to_string()).collect(),
            (1..=t).map(|i| i.to_string()).collect(),
            vec!["x1".into(), "x2".into()],
            (0..n)
                .map(|_| DVector::from_fn(t, |_, _| rng.random::<f64>() * 100.0 - 50.0))
                .collect(),
            (0..n)
                .map(|_| Matrix::from_fn(t, k, |_, _| rng.random::<f64>() * 1e6 - 5e5))
                .collect(),
        )
        .unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_csv(&ds, f.path()).unwrap();
        let back = load_csv(f.path(), &CsvSchema::default()).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn load_is_row_permutation_invariant() {
        let header = "unit,time,y,x1";
        let mut rows: Vec<String> = Vec::new();
        let mut rng = SmallRng::seed_from_u64(9);
        for u in 1..=4 {
            for t in 1..=3 {
                rows.push(format!("{u},{t},{},{}", rng.random::<f64>(), rng.random::<f64>()));
            }
        }
        let f1 = write_tmp(&format!("{header}\n{}\n", rows.join("\n")));
        let ds1 = load_csv(f1.path(), &CsvSchema::default()).unwrap();
        rows.shuffle(&mut rng);
        let f2 = write_tmp(&format!("{header}\n{}\n", rows.join("\n")));
        let ds2 = load_csv(f2.path(), &CsvSchema::default()).unwrap();
        assert_eq!(ds1, ds2);
    }

    #[test]
    fn numeric_time_labels_sort_numerically() {
        // periods 2, 10, 1 must order as 1, 2, 10 (not "1", "10", "2")
        let f = write_tmp(
            "unit,time,y,x1\n1,2,1.0,0.1\n1,10,2.0,0.2\n1,1,0.5,0.05\n2,2,1.0,0.1\n2,10,2.0,0.2\n2,1,0.5,0.05\n",
        );
        let ds = load_csv(f.path(), &CsvSchema::default()).unwrap();
        assert_eq!(ds.time_ids(), &["1", "2", "10"]);
        assert_eq!(ds.y(0)[0], 0.5);
    }

    #[test]
    fn means_identical_units_and_simple_average() {
        let ds = small_panel();
        let means = cross_section_means(&ds);
        assert_eq!(means.y_bar[0], 2.5);
        assert_eq!(means.x_bar[(2, 0)], (0.3 + 0.6) / 2.0);

        // N identical units: X_bar = X_1
        let dsi = PanelDataset::new(
            vec!["1".into(), "2".into(), "3".into()],
            vec!["1".into(), "2".into()],
            vec!["x1".into()],
            vec![DVector::from_column_slice(&[1.0, 2.0]); 3],
            vec![Matrix::from_column_slice(2, 1, &[7.0, 8.0]); 3],
        )
        .unwrap();
        let m = cross_section_means(&dsi);
        assert_eq!(m.x_bar, *dsi.x(0));
        assert_eq!(m.y_bar, *dsi.y(0));

        // two units with X entries 0 and 2 -> mean 1
        let ds2 = PanelDataset::new(
            vec!["1".into(), "2".into()],
            vec!["1".into(), "2".into()],
            vec!["x1".into()],
            vec![DVector::zeros(2), DVector::from_element(2, 2.0)],
            vec![Matrix::zeros(2, 1), Matrix::from_element(2, 1, 2.0)],
        )
        .unwrap();
        assert_eq!(cross_section_means(&ds2).x_bar, Matrix::from_element(2, 1, 1.0));
    }

    #[test]
    fn means_match_compensated_summation_oracle() {
        let mut rng = SmallRng::seed_from_u64(77);
        let n = 500;
        let t = 5;
        let ds = PanelDataset::new(
            (1..=n).map(|i| i.to_string()).collect(),
            (1..=t).map(|i| i.to_string()).collect(),
            vec!["x1".into()],
            (0..n)
                .map(|_| DVector::from_fn(t, |_, _| rng.random::<f64>() * 2000.0 - 1000.0))
                .collect(),
            (0..n)
                .map(|_| Matrix::from_fn(t, 1, |_, _| rng.random::<f64>() * 2000.0 - 1000.0))
                .collect(),
        )
        .unwrap();
        let means = cross_section_means(&ds);
        // Kahan compensated summation oracle
        let kahan_mean = |values: Vec<f64>| -> f64 {
            let mut sum = 0.0_f64;
            let mut c = 0.0_f64;
            for v in &values {
                let y = v - c;
                let t = sum + y;
                c = (t - sum) - y;
                sum = t;
            }
            sum / values.len() as f64
        };
        for ti in 0..t {
            let oracle = kahan_mean((0..n).map(|i| ds.y(i)[ti]).collect());
            let got = means.y_bar[ti];
            assert!(
                (got - oracle).abs() <= 1e-12 * oracle.abs().max(1.0),
                "t={ti}: got {got}, oracle {oracle}"
            );
            let oracle_x = kahan_mean((0..n).map(|i| ds.x(i)[(ti, 0)]).collect());
            let got_x = means.x_bar[(ti, 0)];
            assert!((got_x - oracle_x).abs() <= 1e-12 * oracle_x.abs().max(1.0));
        }
    }

    #[test]
    fn construction_rejects_small_panels() {
        assert!(PanelDataset::new(
            vec!["1".into()],
            vec!["1".into(), "2".into()],
            vec!["x1".into()],
            vec![DVector::zeros(2)],
            vec![Matrix::zeros(2, 1)],
        )
        .is_err());
    }

    #[test]
    fn large_write_streams() {
        // exercises the row-at-a-time writer on a larger panel
        let n = 20_000;
        let t = 3;
        let ds = PanelDataset::new(
            (1..=n).map(|i| i.to_string()).collect(),
            (1..=t).map(|i| i.to_string()).collect(),
            vec!["x1".into()],
            (0..n).map(|i| DVector::from_element(t, i as f64)).collect(),
            (0..n).map(|i| Matrix::from_element(t, 1, i as f64 * 0.5)).collect(),
        )
        .unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_csv(&ds, f.path()).unwrap();
        let lines = std::fs::read_to_string(f.path()).unwrap().lines().count();
        assert_eq!(lines, n * t + 1);
    }
}
