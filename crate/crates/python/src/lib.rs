//! Python bindings. Structured results are returned as plain dicts built
//! from the same serde records the command line writes.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::Serialize;

use dynbounds::bounds::{evaluate, AssumptionRegime, MtrSign, RegimeTag};
use dynbounds::cli::{analyze, Format, OracleJson, RunConfig, SignChoice};
use dynbounds::data::{parse_compact_csv, Arm, PanelDataset};
use dynbounds::estimate::{arm_estimates_from_k, ArmEstimates};
use dynbounds::infer::{normal_quantile as quantile, CriticalMethod};
use dynbounds::oracle::{lp_counterfactual_bounds_t2 as lp_t2, oracle_check as run_oracle, ObservableMargins};
use dynbounds::simulate::{coverage_study as run_coverage, parse_dgp, simulate as run_simulate, CoverageConfig};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<PyObject> {
    let text = serde_json::to_string(value).map_err(err)?;
    Ok(py.import_bound("json")?.call_method1("loads", (text,))?.unbind())
}

fn arm(name: &str) -> PyResult<Arm> {
    match name {
        "treated" | "1" => Ok(Arm::Treated),
        "control" | "0" => Ok(Arm::Control),
        other => Err(PyValueError::new_err(format!("arm must be treated or control, got `{other}`"))),
    }
}

fn regime(name: &str, sign: &str) -> PyResult<AssumptionRegime> {
    let tag: RegimeTag = name.parse().map_err(err)?;
    let sign: MtrSign = sign.parse().map_err(err)?;
    AssumptionRegime::new(tag, sign).map_err(err)
}

/// Event-history sample in the compact CSV format.
#[pyclass(name = "Dataset", module = "dynbounds")]
#[derive(Clone)]
struct PyDataset {
    inner: PanelDataset,
}

#[pymethods]
impl PyDataset {
    /// Parses CSV text with header `id,arm,duration,event[,treat_start]`.
    #[staticmethod]
    fn from_csv(text: &str) -> PyResult<Self> {
        Ok(PyDataset {
            inner: parse_compact_csv(text.as_bytes()).map_err(err)?,
        })
    }

    #[staticmethod]
    fn read_csv(path: &str) -> PyResult<Self> {
        let text = std::fs::read_to_string(path).map_err(err)?;
        Self::from_csv(&text)
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn t_max(&self) -> u32 {
        self.inner.t_max()
    }

    #[getter]
    fn n_treated(&self) -> usize {
        self.inner.arm_size(Arm::Treated)
    }

    #[getter]
    fn n_control(&self) -> usize {
        self.inner.arm_size(Arm::Control)
    }

    fn binned(&self, width: u32) -> PyResult<Self> {
        Ok(PyDataset {
            inner: self.inner.bin_periods(width).map_err(err)?,
        })
    }

    fn with_horizon(&self, t_max: u32) -> PyResult<Self> {
        Ok(PyDataset {
            inner: self.inner.with_horizon(t_max).map_err(err)?,
        })
    }

    fn risk_table(&self, py: Python<'_>, arm_name: &str) -> PyResult<PyObject> {
        to_py(py, &self.inner.risk_table(arm(arm_name)?))
    }

    /// Bounds and, unless `intervals` is false, bootstrap confidence
    /// intervals for every period and regime, as a report dict.
    #[pyo3(signature = (regimes=None, mtr_sign="unknown", alpha=0.05, alpha_pre=0.001, bootstrap=399, seed=1, intervals=true))]
    #[allow(clippy::too_many_arguments)]
    fn analyze(
        &self,
        py: Python<'_>,
        regimes: Option<Vec<String>>,
        mtr_sign: &str,
        alpha: f64,
        alpha_pre: f64,
        bootstrap: usize,
        seed: u64,
        intervals: bool,
    ) -> PyResult<PyObject> {
        let tags = match regimes {
            Some(names) => names.iter().map(|s| s.parse()).collect::<Result<Vec<RegimeTag>, _>>().map_err(err)?,
            None => RegimeTag::ATETS.to_vec(),
        };
        let sign = match mtr_sign {
            "unknown" => SignChoice::Unknown,
            "nonneg" => SignChoice::Nonneg,
            "nonpos" => SignChoice::Nonpos,
            "auto" => SignChoice::Auto,
            other => return Err(PyValueError::new_err(format!("unknown MTR sign `{other}`"))),
        };
        let cfg = RunConfig {
            input: None,
            bin_width: self.inner.bin_width(),
            t_max: Some(self.inner.t_max()),
            k: 1,
            regimes: tags,
            mtr_sign: sign,
            alpha,
            alpha_pre,
            bootstrap,
            seed,
            critical: CriticalMethod::Bonferroni,
            format: Format::Json,
            subgroup: None,
            intervals,
        };
        let command = if intervals { "ci" } else { "bounds" };
        let report = py
            .allow_threads(|| analyze(command, &self.inner, self.inner.records(), &cfg))
            .map_err(err)?;
        to_py(py, &report)
    }
}

/// Life-table hazards, survival and joint probabilities by arm.
#[pyclass(name = "Estimates", module = "dynbounds")]
#[derive(Clone)]
struct PyEstimates {
    inner: ArmEstimates,
}

#[pymethods]
impl PyEstimates {
    /// Estimates from a sample, for treatment starting in period `k`.
    #[staticmethod]
    #[pyo3(signature = (dataset, t_max=None, k=1))]
    fn from_dataset(dataset: &PyDataset, t_max: Option<u32>, k: u32) -> PyResult<Self> {
        let t = t_max.unwrap_or(dataset.inner.t_max());
        Ok(PyEstimates {
            inner: arm_estimates_from_k(&dataset.inner, k, t).map_err(err)?,
        })
    }

    /// Population quantities from per-period hazards.
    #[staticmethod]
    fn from_hazards(treated: Vec<f64>, control: Vec<f64>) -> PyResult<Self> {
        if treated.len() != control.len() || treated.is_empty() {
            return Err(PyValueError::new_err("hazard vectors must be non-empty and of equal length"));
        }
        Ok(PyEstimates {
            inner: ArmEstimates::from_hazards(&treated, &control),
        })
    }

    #[getter]
    fn t_max(&self) -> u32 {
        self.inner.t_max()
    }

    fn hazard(&self, arm_name: &str, t: u32) -> PyResult<Option<f64>> {
        Ok(self.inner.hazard(arm(arm_name)?, t))
    }

    fn survival(&self, arm_name: &str, t: u32) -> PyResult<Option<f64>> {
        Ok(self.inner.survival(arm(arm_name)?, t))
    }

    fn joint(&self, arm_name: &str, t: u32) -> PyResult<Option<f64>> {
        Ok(self.inner.joint(arm(arm_name)?, t))
    }

    /// Bounds at period `t`; returns `(lb, ub)` or `None` when undefined.
    #[pyo3(signature = (t, regime_name="none", mtr_sign="unknown"))]
    fn bounds(&self, t: u32, regime_name: &str, mtr_sign: &str) -> PyResult<Option<(f64, f64)>> {
        let b = evaluate(&self.inner, t, regime(regime_name, mtr_sign)?).map_err(err)?;
        Ok((!b.undefined).then_some((b.lb, b.ub)))
    }

    /// Full bounds record as a dict.
    #[pyo3(signature = (t, regime_name="none", mtr_sign="unknown"))]
    fn bounds_detail(&self, py: Python<'_>, t: u32, regime_name: &str, mtr_sign: &str) -> PyResult<PyObject> {
        let b = evaluate(&self.inner, t, regime(regime_name, mtr_sign)?).map_err(err)?;
        to_py(py, &b)
    }
}

/// Inverse standard-normal CDF.
#[pyfunction]
fn normal_quantile(p: f64) -> PyResult<f64> {
    quantile(p).map_err(err)
}

/// LP range of the counterfactual survivor mean at period 2.
#[pyfunction]
fn lp_counterfactual_bounds_t2(treated_hazards: Vec<f64>, control_hazards: Vec<f64>) -> PyResult<(f64, f64)> {
    let m = ObservableMargins::from_hazards(&treated_hazards, &control_hazards).map_err(err)?;
    lp_t2(&m).map_err(err)
}

/// Randomized LP-versus-closed-form comparison.
#[pyfunction]
#[pyo3(signature = (trials=10_000, seed=7, tolerance=1e-9))]
fn oracle_check(py: Python<'_>, trials: usize, seed: u64, tolerance: f64) -> PyResult<PyObject> {
    let report = py.allow_threads(|| run_oracle(trials, seed, tolerance));
    to_py(py, &OracleJson::from(&report))
}

/// Simulates `n` units from a DGP given in the key-value text format.
/// Returns the dataset and a dict of population effects.
#[pyfunction]
#[pyo3(signature = (dgp, n, seed, aux_units=1_000_000))]
fn simulate(py: Python<'_>, dgp: &str, n: usize, seed: u64, aux_units: usize) -> PyResult<(PyDataset, PyObject)> {
    let dgp = parse_dgp(dgp).map_err(err)?;
    let (ds, truth) = py.allow_threads(|| run_simulate(&dgp, n, seed, aux_units)).map_err(err)?;
    Ok((PyDataset { inner: ds }, to_py(py, &truth)?))
}

/// Monte Carlo coverage report for a DGP given in the key-value text format.
#[pyfunction]
#[pyo3(signature = (dgp, n, reps, seed, bootstrap=399, alpha=0.05, alpha_pre=0.001, aux_units=1_000_000))]
#[allow(clippy::too_many_arguments)]
fn coverage_study(
    py: Python<'_>,
    dgp: &str,
    n: usize,
    reps: usize,
    seed: u64,
    bootstrap: usize,
    alpha: f64,
    alpha_pre: f64,
    aux_units: usize,
) -> PyResult<PyObject> {
    let dgp = parse_dgp(dgp).map_err(err)?;
    let mut cfg = CoverageConfig::new(n, reps, seed);
    cfg.bootstrap = bootstrap;
    cfg.alpha = alpha;
    cfg.alpha_pre = alpha_pre;
    cfg.aux_units = aux_units;
    let report = py.allow_threads(|| run_coverage(&dgp, &cfg)).map_err(err)?;
    to_py(py, &report)
}

#[pymodule]
#[pyo3(name = "dynbounds")]
fn dynbounds_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyEstimates>()?;
    m.add_function(wrap_pyfunction!(normal_quantile, m)?)?;
    m.add_function(wrap_pyfunction!(lp_counterfactual_bounds_t2, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_check, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(coverage_study, m)?)?;
    m.add("SCHEMA_VERSION", dynbounds::cli::SCHEMA_VERSION)?;
    Ok(())
}
