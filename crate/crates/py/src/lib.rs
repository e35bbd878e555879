use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use srassim::config::parse_config;
use srassim::filters::{self, FilterKind};
use srassim::harness;
use srassim::model::{self, Dimension};
use srassim::truth::{self, ObservationNoise, ObservationSeries, TruthScenario};

fn err(e: srassim::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn dimension(name: &str) -> PyResult<Dimension> {
    name.parse().map_err(err)
}

#[pyclass(name = "ModelConfig", from_py_object)]
#[derive(Clone)]
pub struct PyModelConfig {
    inner: model::ModelConfig,
}

#[pymethods]
impl PyModelConfig {
    #[new]
    #[pyo3(signature = (population = 100_000, weeks_per_season = 52, steps_per_week = 7))]
    fn new(population: u64, weeks_per_season: usize, steps_per_week: usize) -> PyResult<Self> {
        let inner = model::ModelConfig { population, weeks_per_season, steps_per_week, ..Default::default() };
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn population(&self) -> u64 {
        self.inner.population
    }

    #[getter]
    fn weeks_per_season(&self) -> usize {
        self.inner.weeks_per_season
    }

    fn __repr__(&self) -> String {
        format!("ModelConfig(population={}, weeks_per_season={})", self.inner.population, self.inner.weeks_per_season)
    }
}

#[pyclass(name = "ModelState", skip_from_py_object)]
#[derive(Clone)]
pub struct PyModelState {
    inner: model::ModelState,
}

#[pymethods]
impl PyModelState {
    #[new]
    fn new(s: f64, i: f64, l: f64, d: f64, r0max: f64, r0min: f64) -> Self {
        Self { inner: model::ModelState { s, i, l, d, r0max, r0min } }
    }

    fn get(&self, name: &str) -> PyResult<f64> {
        Ok(self.inner.get(dimension(name)?))
    }

    /// One week of dynamics; returns the next state and the weekly incidence.
    fn step(&self, week: usize, model: &PyModelConfig) -> PyResult<(PyModelState, f64)> {
        let (next, inc) = model::simulate_week(&self.inner, week, &model.inner).map_err(err)?;
        Ok((PyModelState { inner: next }, model::observe(inc, &model.inner)))
    }

    fn as_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        for dim in Dimension::ALL {
            d.set_item(dim.name(), self.inner.get(dim))?;
        }
        Ok(d)
    }

    fn __repr__(&self) -> String {
        let m = &self.inner;
        format!("ModelState(s={}, i={}, l={}, d={}, r0max={}, r0min={})", m.s, m.i, m.l, m.d, m.r0max, m.r0min)
    }
}

#[pyclass(name = "Scenario", skip_from_py_object)]
#[derive(Clone)]
pub struct PyScenario {
    inner: TruthScenario,
}

#[pymethods]
impl PyScenario {
    #[staticmethod]
    #[pyo3(signature = (population = 1e5))]
    fn unimodal(population: f64) -> Self {
        Self { inner: TruthScenario::unimodal(population) }
    }

    #[staticmethod]
    #[pyo3(signature = (population = 1e5, switch_week = None))]
    fn two_strain(population: f64, switch_week: Option<usize>) -> Self {
        let mut inner = TruthScenario::two_strain(population);
        if let Some(w) = switch_week {
            inner.switch_week = w;
        }
        Self { inner }
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.name()
    }

    #[getter]
    fn switch_week(&self) -> usize {
        self.inner.switch_week
    }

    #[getter]
    fn initial_state(&self) -> PyModelState {
        PyModelState { inner: self.inner.truth }
    }

    /// Noise-free weekly incidence per 100k.
    fn truth(&self, model: &PyModelConfig) -> PyResult<Vec<f64>> {
        Ok(truth::generate_truth(&self.inner, &model.inner).map_err(err)?.incidence)
    }

    /// Truth and noisy observations for a trial seed.
    #[pyo3(signature = (model, seed, oev_base = 1.0, oev_rho = 0.2))]
    fn observations(&self, model: &PyModelConfig, seed: u64, oev_base: f64, oev_rho: f64) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let noise = ObservationNoise { oev_base, oev_rho };
        let (t, obs) = harness::scenario_observations(&self.inner, &model.inner, &noise, seed).map_err(err)?;
        Ok((t.incidence, obs.observed))
    }

    fn __repr__(&self) -> String {
        format!("Scenario({})", self.inner.name())
    }
}

#[pyclass(name = "FilterConfig", skip_from_py_object)]
#[derive(Clone)]
pub struct PyFilterConfig {
    inner: filters::FilterConfig,
    /// Trial seed; runs use the derived filter seed.
    seed: u64,
}

#[pymethods]
impl PyFilterConfig {
    #[new]
    #[pyo3(signature = (kind = "PF", n_members = None, sr = true, fraction = 0.02, seed = 0, population = 1e5))]
    fn new(kind: &str, n_members: Option<usize>, sr: bool, fraction: f64, seed: u64, population: f64) -> PyResult<Self> {
        let kind: FilterKind = kind.parse().map_err(err)?;
        let mut inner = filters::FilterConfig::new(kind, population);
        inner.reprobe.enabled = sr;
        inner.reprobe.fraction = fraction;
        inner.n_members = n_members.unwrap_or_else(|| filters::default_members(kind, inner.reprobe.is_active()));
        inner.record_snapshots = false;
        inner.validate().map_err(err)?;
        Ok(Self { inner, seed })
    }

    /// Filter settings from configuration text.
    #[staticmethod]
    #[pyo3(signature = (text, sr = None, seed = 0))]
    fn from_text(text: &str, sr: Option<bool>, seed: u64) -> PyResult<Self> {
        let cfg = parse_config(text).map_err(err)?;
        Ok(Self { inner: cfg.filter_config(sr), seed })
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind.name()
    }

    #[getter]
    fn n_members(&self) -> usize {
        self.inner.n_members
    }

    #[setter]
    fn set_n_members(&mut self, n: usize) {
        self.inner.n_members = n;
    }

    #[getter]
    fn sr(&self) -> bool {
        self.inner.reprobe.enabled
    }

    #[setter]
    fn set_sr(&mut self, on: bool) {
        self.inner.reprobe.enabled = on;
    }

    #[getter]
    fn fraction(&self) -> f64 {
        self.inner.reprobe.fraction
    }

    #[setter]
    fn set_fraction(&mut self, f: f64) {
        self.inner.reprobe.fraction = f;
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }

    #[getter]
    fn mif_iterations(&self) -> usize {
        self.inner.mif_iterations
    }

    #[setter]
    fn set_mif_iterations(&mut self, n: usize) {
        self.inner.mif_iterations = n;
    }

    #[getter]
    fn pmcmc_chain_length(&self) -> usize {
        self.inner.pmcmc_chain_length
    }

    #[setter]
    fn set_pmcmc_chain_length(&mut self, n: usize) {
        self.inner.pmcmc_chain_length = n;
    }

    fn __repr__(&self) -> String {
        format!("FilterConfig(kind={}, n_members={}, sr={}, seed={})", self.inner.kind.name(), self.inner.n_members, self.inner.reprobe.is_active(), self.seed)
    }
}

impl PyFilterConfig {
    fn resolved(&self) -> PyResult<filters::FilterConfig> {
        let cfg = harness::seeded_config(&self.inner, self.seed);
        cfg.validate().map_err(err)?;
        Ok(cfg)
    }
}

fn series(observed: Vec<f64>, cfg: &filters::FilterConfig, model: &model::ModelConfig) -> PyResult<ObservationSeries> {
    let oev = observed.iter().map(|z| filters::obs_error_variance(*z, cfg)).collect();
    ObservationSeries::new(observed, oev, model.season_start_week).map_err(err)
}

#[pyclass(name = "SeasonRun")]
pub struct PySeasonRun {
    inner: filters::SeasonRun,
}

#[pymethods]
impl PySeasonRun {
    #[getter]
    fn weeks(&self) -> usize {
        self.inner.records.len()
    }

    #[getter]
    fn log_likelihood(&self) -> f64 {
        self.inner.log_likelihood
    }

    /// Weighted posterior mean incidence, one value per week.
    fn posterior_mean(&self) -> Vec<f64> {
        self.inner.posterior_mean_trajectory()
    }

    /// Weekly posterior mean of a state dimension.
    fn state_mean(&self, name: &str) -> PyResult<Vec<f64>> {
        let d = dimension(name)?;
        Ok(self.inner.records.iter().map(|r| r.posterior_summary.mean[d.index()]).collect())
    }

    /// Weekly posterior sd of a state dimension.
    fn state_sd(&self, name: &str) -> PyResult<Vec<f64>> {
        let d = dimension(name)?;
        Ok(self.inner.records.iter().map(|r| r.posterior_summary.sd[d.index()]).collect())
    }

    fn reprobed(&self) -> Vec<usize> {
        self.inner.records.iter().map(|r| r.reprobed).collect()
    }

    fn rms(&self, observed: Vec<f64>) -> PyResult<f64> {
        harness::fit_rms(&self.inner, &observed).map_err(err)
    }

    /// Final members' values of one dimension.
    fn members(&self, name: &str) -> PyResult<Vec<f64>> {
        Ok(self.inner.ensemble.column(dimension(name)?))
    }
}

#[pyclass(name = "Forecast", from_py_object)]
#[derive(Clone)]
pub struct PyForecast {
    inner: harness::ForecastResult,
}

#[pymethods]
impl PyForecast {
    #[getter]
    fn forecast_week(&self) -> usize {
        self.inner.forecast_week
    }

    #[getter]
    fn predicted_peak(&self) -> usize {
        self.inner.predicted_peak
    }

    #[getter]
    fn observed_peak(&self) -> usize {
        self.inner.observed_peak
    }

    #[getter]
    fn accurate(&self) -> bool {
        self.inner.accurate
    }

    #[getter]
    fn rms(&self) -> f64 {
        self.inner.rms
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn trajectory(&self) -> Vec<f64> {
        self.inner.trajectory.clone()
    }

    fn __repr__(&self) -> String {
        let r = &self.inner;
        format!("Forecast(week={}, predicted_peak={}, observed_peak={}, accurate={})", r.forecast_week, r.predicted_peak, r.observed_peak, r.accurate)
    }
}

/// Fits one season of observations.
#[pyfunction]
#[pyo3(signature = (observed, config, model = None))]
fn run_filter(py: Python<'_>, observed: Vec<f64>, config: &PyFilterConfig, model: Option<PyModelConfig>) -> PyResult<PySeasonRun> {
    let model = model.map(|m| m.inner).unwrap_or_default();
    let cfg = config.resolved()?;
    let obs = series(observed, &cfg, &model)?;
    let inner = py.detach(|| filters::run_filter_season(&obs, &cfg, &model)).map_err(err)?;
    Ok(PySeasonRun { inner })
}

/// Forecasts trained through each of `weeks`.
#[pyfunction]
#[pyo3(signature = (observed, weeks, config, model = None, scenario = "custom"))]
fn forecast(py: Python<'_>, observed: Vec<f64>, weeks: Vec<usize>, config: &PyFilterConfig, model: Option<PyModelConfig>, scenario: &str) -> PyResult<Vec<PyForecast>> {
    let model = model.map(|m| m.inner).unwrap_or_default();
    let cfg = config.resolved()?;
    let obs = series(observed, &cfg, &model)?;
    let results = py.detach(|| harness::forecast_series(&obs, &weeks, &cfg, &model)).map_err(err)?;
    Ok(results
        .into_iter()
        .map(|mut r| {
            r.scenario = scenario.to_string();
            r.seed = config.seed;
            PyForecast { inner: r }
        })
        .collect())
}

fn summary_dict<'py>(py: Python<'py>, s: &srassim::stats::PairedSummary) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("n", s.n)?;
    d.set_item("mean_diff", s.mean_diff)?;
    d.set_item("sd", s.sd)?;
    d.set_item("ci95", (s.ci95_low, s.ci95_high))?;
    d.set_item("t", s.t)?;
    d.set_item("p_one_sided", s.p_one_sided)?;
    d.set_item("p_two_sided", s.p_two_sided)?;
    Ok(d)
}

/// Paired t summary of a list of differences.
#[pyfunction]
fn paired_t<'py>(py: Python<'py>, diffs: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
    summary_dict(py, &srassim::stats::paired_t(&diffs))
}

/// Paired peak-accuracy comparison; keys are (scenario, week, seed).
#[pyfunction]
fn compare<'py>(py: Python<'py>, with_sr: Vec<PyForecast>, without: Vec<PyForecast>) -> PyResult<Bound<'py, PyDict>> {
    let a: Vec<_> = with_sr.into_iter().map(|f| f.inner).collect();
    let b: Vec<_> = without.into_iter().map(|f| f.inner).collect();
    let c = harness::compare_paired(&a, &b).map_err(err)?;
    let d = summary_dict(py, &c.overall)?;
    let weeks = PyDict::new(py);
    for w in &c.per_week {
        weeks.set_item(w.forecast_week, summary_dict(py, &w.summary)?)?;
    }
    d.set_item("per_week", weeks)?;
    Ok(d)
}

fn parameter_dict<'py>(py: Python<'py>, v: &filters::ParameterVector) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    for (dim, x) in Dimension::PARAMETERS.iter().zip(v) {
        d.set_item(dim.name(), *x)?;
    }
    Ok(d)
}

/// Iterated filtering estimate of the constant parameters.
#[pyfunction]
#[pyo3(signature = (observed, config, model = None))]
fn mif<'py>(py: Python<'py>, observed: Vec<f64>, config: &PyFilterConfig, model: Option<PyModelConfig>) -> PyResult<Bound<'py, PyDict>> {
    let model = model.map(|m| m.inner).unwrap_or_default();
    let cfg = config.resolved()?;
    let r = py.detach(|| filters::mif_run(&observed, &cfg, &model)).map_err(err)?;
    let d = parameter_dict(py, &r.estimate)?;
    d.set_item("log_likelihood", r.log_likelihood)?;
    Ok(d)
}

/// PMMH posterior medians of the constant parameters.
#[pyfunction]
#[pyo3(signature = (observed, config, model = None))]
fn pmcmc<'py>(py: Python<'py>, observed: Vec<f64>, config: &PyFilterConfig, model: Option<PyModelConfig>) -> PyResult<Bound<'py, PyDict>> {
    let model = model.map(|m| m.inner).unwrap_or_default();
    let cfg = config.resolved()?;
    let r = py.detach(|| filters::pmcmc_run(&observed, &cfg, &model)).map_err(err)?;
    let d = parameter_dict(py, &r.posterior_median())?;
    d.set_item("acceptance_rate", r.acceptance_rate)?;
    d.set_item("best_log_likelihood", r.best_log_likelihood)?;
    Ok(d)
}

/// Week index of the largest value, earliest on ties.
#[pyfunction]
fn peak_week(series: Vec<f64>) -> usize {
    harness::peak_week(&series)
}

#[pymodule]
fn srassim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", srassim::VERSION)?;
    m.add_class::<PyModelConfig>()?;
    m.add_class::<PyModelState>()?;
    m.add_class::<PyScenario>()?;
    m.add_class::<PyFilterConfig>()?;
    m.add_class::<PySeasonRun>()?;
    m.add_class::<PyForecast>()?;
    m.add_function(wrap_pyfunction!(run_filter, m)?)?;
    m.add_function(wrap_pyfunction!(forecast, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    m.add_function(wrap_pyfunction!(paired_t, m)?)?;
    m.add_function(wrap_pyfunction!(mif, m)?)?;
    m.add_function(wrap_pyfunction!(pmcmc, m)?)?;
    m.add_function(wrap_pyfunction!(peak_week, m)?)?;
    Ok(())
}
