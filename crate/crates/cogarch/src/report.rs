//! Machine-readable outputs: JSON reports and RFC-4180 CSV readers/writers
//! shared by the CLI and the integration tests.
//!
//! Every JSON report embeds the tool version and the fully resolved
//! configuration so a run can be reproduced from its output alone.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::estimate::{GmmFit, Objective};
use crate::levy::LevySpec;
use crate::model::DiagnosticsReport;
use crate::simulate::Trajectory;
use crate::{Error, Result};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IncrementStats {
    pub count: usize,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

impl IncrementStats {
    pub fn from_series(x: &[f64]) -> Self {
        let n = x.len().max(1) as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        IncrementStats {
            count: x.len(),
            mean,
            sd: var.sqrt(),
            min: x.iter().copied().fold(f64::INFINITY, f64::min),
            max: x.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevyFitReport {
    pub family: String,
    pub params: BTreeMap<String, f64>,
    pub minus2_loglik: f64,
    pub converged: bool,
}

/// Summary block mirroring the coefficient table, objective value,
/// increment statistics, and Levy fit of an estimation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateReport {
    pub version: String,
    pub config: serde_json::Value,
    pub objective: Objective,
    pub coefficients: Vec<Coefficient>,
    pub obj_value: f64,
    pub log_obj_value: f64,
    pub n_obs: usize,
    pub iterations: usize,
    pub converged: bool,
    pub vcov: Option<Vec<Vec<f64>>>,
    pub increments: Option<IncrementStats>,
    pub levy: Option<LevyFitReport>,
}

impl EstimateReport {
    pub fn from_fit(fit: &GmmFit, config: serde_json::Value) -> Self {
        let q = fit.b.len();
        let p = fit.a.len();
        let mut coefficients = Vec::with_capacity(p + q + 1);
        for i in 0..q {
            coefficients.push(Coefficient {
                name: format!("b{}", i + 1),
                estimate: fit.b[i],
                std_error: fit.std_errors[i],
            });
        }
        for i in 0..p {
            coefficients.push(Coefficient {
                name: format!("a{}", i + 1),
                estimate: fit.a[i],
                std_error: fit.std_errors[q + i],
            });
        }
        coefficients.push(Coefficient { name: "a0".into(), estimate: fit.a0, std_error: None });
        let levy = fit.levy_fit.as_ref().map(|lf| {
            let mut params = BTreeMap::new();
            match lf.spec {
                LevySpec::CompoundPoissonNormal { lambda, eta, sig2 } => {
                    params.insert("lambda".into(), lambda);
                    params.insert("eta".into(), eta);
                    params.insert("sig2".into(), sig2);
                }
                LevySpec::VarianceGamma { lambda, alpha, beta, mu0 } => {
                    params.insert("lambda".into(), lambda);
                    params.insert("alpha".into(), alpha);
                    params.insert("beta".into(), beta);
                    params.insert("mu0".into(), mu0);
                }
            }
            LevyFitReport {
                family: lf.spec.family_name().into(),
                params,
                minus2_loglik: lf.minus2_loglik,
                converged: lf.converged,
            }
        });
        EstimateReport {
            version: TOOL_VERSION.into(),
            config,
            objective: fit.objective,
            coefficients,
            obj_value: fit.obj_value,
            log_obj_value: fit.log_obj_value,
            n_obs: fit.n_obs,
            iterations: fit.iterations,
            converged: fit.converged,
            vcov: fit.vcov.as_ref().map(|m| {
                (0..m.nrows())
                    .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
                    .collect()
            }),
            increments: fit.increments.as_deref().map(IncrementStats::from_series),
            levy,
        }
    }
}

/// Diagnostics report with provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnoseReport {
    pub version: String,
    pub config: serde_json::Value,
    #[serde(flatten)]
    pub diagnostics: DiagnosticsReport,
}

/// Write a trajectory as `time,G,V,Y1..Yq[,dL]` (dL left blank on the
/// first row, which has no increment).
pub fn write_trajectory_csv<W: Write>(w: &mut W, tr: &Trajectory, with_dl: bool) -> Result<()> {
    let q = tr.y.ncols();
    let mut header = String::from("time,G,V");
    for j in 1..=q {
        header.push_str(&format!(",Y{j}"));
    }
    if with_dl {
        header.push_str(",dL");
    }
    writeln!(w, "{header}")?;
    for k in 0..tr.times.len() {
        let mut line = format!("{},{},{}", tr.times[k], tr.g[k], tr.v[k]);
        for j in 0..q {
            line.push_str(&format!(",{}", tr.y[(k, j)]));
        }
        if with_dl {
            if k == 0 {
                line.push(',');
            } else {
                line.push_str(&format!(",{}", tr.dl[k - 1]));
            }
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Read a `time,G` data file (extra columns ignored; header required).
pub fn read_data_csv<R: Read>(r: R) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let headers = rdr.headers().map_err(|e| Error::Data(e.to_string()))?.clone();
    let t_idx = headers
        .iter()
        .position(|h| h.trim().eq_ignore_ascii_case("time"))
        .ok_or_else(|| Error::Data("data file needs a 'time' column".into()))?;
    let g_idx = headers
        .iter()
        .position(|h| h.trim().eq_ignore_ascii_case("g"))
        .ok_or_else(|| Error::Data("data file needs a 'G' column".into()))?;
    let mut times = Vec::new();
    let mut g = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Data(e.to_string()))?;
        let parse = |i: usize| -> Result<f64> {
            rec.get(i)
                .ok_or_else(|| Error::Data("short row".into()))?
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Data(format!("bad number: {e}")))
        };
        times.push(parse(t_idx)?);
        g.push(parse(g_idx)?);
    }
    if times.len() < 2 {
        return Err(Error::Data("data file has fewer than two rows".into()));
    }
    Ok((times, g))
}

/// Verify the grid is equally spaced within 1e-9 relative jitter and
/// return the step.
pub fn check_equally_spaced(times: &[f64]) -> Result<f64> {
    let n = times.len() - 1;
    let span = times[n] - times[0];
    if !(span > 0.0) {
        return Err(Error::Data("time column is not increasing".into()));
    }
    let dt = span / n as f64;
    for (i, w) in times.windows(2).enumerate() {
        if ((w[1] - w[0]) - dt).abs() > 1e-9 * span {
            return Err(Error::Data(format!(
                "observations are not equally spaced (step {i} deviates)"
            )));
        }
    }
    Ok(dt)
}

/// Single-column increments file with header `dL`.
pub fn write_increments_csv<W: Write>(w: &mut W, dl: &[f64]) -> Result<()> {
    writeln!(w, "dL")?;
    for v in dl {
        writeln!(w, "{v}")?;
    }
    Ok(())
}

pub fn read_increments_csv<R: Read>(r: R) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let headers = rdr.headers().map_err(|e| Error::Data(e.to_string()))?;
    if !headers.iter().any(|h| h.trim() == "dL") {
        return Err(Error::Data("increments file needs a 'dL' header".into()));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Data(e.to_string()))?;
        out.push(
            rec.get(0)
                .ok_or_else(|| Error::Data("empty row".into()))?
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Data(format!("bad number: {e}")))?,
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::LevySpec;
    use crate::model::build_spec;
    use crate::simulate::{simulate_mixed, SamplingGrid};

    #[test]
    fn trajectory_csv_roundtrips_through_data_reader() {
        let spec = build_spec(
            1,
            1,
            &[0.038],
            &[0.053],
            0.7547,
            LevySpec::CompoundPoissonNormal { lambda: 1.0, eta: 0.0, sig2: 1.0 },
        )
        .unwrap();
        let grid = SamplingGrid { terminal: 10.0, n: 150 };
        let tr = simulate_mixed(&spec, &grid, None, 5).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &tr, true).unwrap();
        let (times, g) = read_data_csv(&buf[..]).unwrap();
        assert_eq!(times.len(), 151);
        for (x, y) in g.iter().zip(&tr.g) {
            assert_eq!(x, y, "shortest-roundtrip formatting must be exact");
        }
        let dt = check_equally_spaced(&times).unwrap();
        assert!((dt - grid.dt()).abs() < 1e-12);
    }

    #[test]
    fn irregular_times_rejected() {
        let mut times: Vec<f64> = (0..100).map(|k| k as f64).collect();
        times[50] += 1e-3;
        assert!(check_equally_spaced(&times).is_err());
    }

    #[test]
    fn increments_csv_roundtrip() {
        let dl = vec![0.0, -1.25, 3.5e-7, 42.0];
        let mut buf = Vec::new();
        write_increments_csv(&mut buf, &dl).unwrap();
        let back = read_increments_csv(&buf[..]).unwrap();
        assert_eq!(dl, back);
    }
}
