//! Python bindings for `h2lca`.

use std::path::PathBuf;
use std::str::FromStr;

use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use h2lca::econ::{export_outputs, ComparisonRow, EconParams, OutputFormat};
use h2lca::esn::steady_state_lca;
use h2lca::hfgt::{partition, reduced_incidence, PartitionedMatrix};
use h2lca::ingest::Source;
use h2lca::linalg::Matrix;
use h2lca::model::{parse_system_model, validate_model};
use h2lca::pipeline::{evaluate, load_series, DataInputs, RunSpec, SeriesFilter};
use h2lca::scenario::{self, CiSource, ElectrolyzerSpec, LcaModel, ProductionRule, ScenarioConfig, ScenarioKind};

fn to_py(e: impl Into<h2lca::Error>) -> PyErr {
    let e = e.into();
    if e.is_numerical() {
        PyArithmeticError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

/// A hetero-functional system model.
#[pyclass(name = "SystemModel", module = "h2lca_py")]
struct PySystemModel {
    inner: h2lca::model::SystemModel,
}

#[pymethods]
impl PySystemModel {
    /// The bundled Australian hydrogen supply model.
    #[staticmethod]
    fn bundled() -> Self {
        PySystemModel {
            inner: h2lca::model::SystemModel::australia_h2(),
        }
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(PySystemModel {
            inner: parse_system_model(text).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| PyValueError::new_err(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Violations as "subject: message" strings; empty when well-formed.
    fn validate(&self) -> Vec<String> {
        validate_model(&self.inner)
            .violations
            .iter()
            .map(|v| format!("{}: {}", v.subject, v.message))
            .collect()
    }

    fn to_document(&self) -> String {
        self.inner.to_document()
    }

    fn capabilities(&self) -> Vec<String> {
        self.inner.capabilities.iter().map(|c| c.id.clone()).collect()
    }

    /// Reduced incidence matrix as (values, row labels, column labels).
    fn incidence(&self) -> PyResult<(Vec<Vec<f64>>, Vec<String>, Vec<String>)> {
        let m = reduced_incidence(&self.inner).map_err(to_py)?;
        Ok((
            rows(&m.values),
            m.row_map.iter().map(|p| p.to_string()).collect(),
            m.col_map.clone(),
        ))
    }

    /// Split into product and aspect blocks; aspects default to the model's
    /// `lca.aspects` metadata.
    #[pyo3(signature = (aspects=None))]
    fn partition(&self, aspects: Option<Vec<String>>) -> PyResult<PyPartition> {
        let aspects = match aspects {
            Some(a) => a,
            None => self
                .inner
                .metadata
                .get("lca.aspects")
                .ok_or_else(|| PyValueError::new_err("model has no lca.aspects metadata"))?
                .split(',')
                .map(|s| s.trim().to_string())
                .collect(),
        };
        let m = reduced_incidence(&self.inner).map_err(to_py)?;
        Ok(PyPartition {
            inner: partition(&m, &aspects).map_err(to_py)?,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "SystemModel({} operands, {} resources, {} capabilities)",
            self.inner.operands.len(),
            self.inner.resources.len(),
            self.inner.capabilities.len()
        )
    }
}

/// Product block A and aspect block B.
#[pyclass(name = "Partition", module = "h2lca_py")]
struct PyPartition {
    inner: PartitionedMatrix,
}

#[pymethods]
impl PyPartition {
    #[staticmethod]
    fn from_blocks(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>) -> PyResult<Self> {
        let cols = a.first().map_or(0, Vec::len);
        let b = if b.is_empty() { Matrix::zeros(0, cols) } else { Matrix::from_rows(&b) };
        Ok(PyPartition {
            inner: PartitionedMatrix::from_blocks(Matrix::from_rows(&a), b).map_err(to_py)?,
        })
    }

    #[getter]
    fn a(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.a)
    }

    #[getter]
    fn b(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.b)
    }

    #[getter]
    fn products(&self) -> Vec<String> {
        self.inner.product_places.iter().map(|p| p.to_string()).collect()
    }

    #[getter]
    fn aspects(&self) -> Vec<String> {
        self.inner.aspect_places.iter().map(|p| p.to_string()).collect()
    }

    #[getter]
    fn capabilities(&self) -> Vec<String> {
        self.inner.col_map.clone()
    }

    /// Solve A·x = ΔY and return ΔE = B·x. Keys: firing, delta_e, condition.
    fn steady_state_lca<'py>(&self, py: Python<'py>, delta_y: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
        let sol = steady_state_lca(&self.inner, &delta_y).map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("firing", sol.firing)?;
        d.set_item("delta_e", sol.delta_e)?;
        d.set_item("condition", sol.condition)?;
        Ok(d)
    }
}

/// kg CO2eq per kg H2 for a grid intensity in g CO2eq/kWh.
#[pyfunction]
#[pyo3(signature = (grid_ci, specific_energy=52.5))]
fn ci_per_kg(grid_ci: f64, specific_energy: f64) -> f64 {
    let spec = ElectrolyzerSpec {
        specific_energy,
        ..ElectrolyzerSpec::default()
    };
    scenario::ci_per_kg(grid_ci, &spec)
}

/// AUD per kg H2 at an electricity price in AUD/MWh.
#[pyfunction]
#[pyo3(signature = (price, specific_energy=52.5, op_cost=1.96))]
fn cost_per_kg(price: f64, specific_energy: f64, op_cost: f64) -> f64 {
    let econ = EconParams {
        specific_energy,
        op_cost,
        ..EconParams::default()
    };
    h2lca::econ::cost_per_kg(price, &econ)
}

/// Production rate (kg/h) a scenario picks at a given kg CO2eq/kg.
#[pyfunction]
#[pyo3(signature = (scenario, ci_kg, credit_ci_cap=0.6))]
fn decide_rate(scenario: &str, ci_kg: f64, credit_ci_cap: f64) -> PyResult<f64> {
    let kind = ScenarioKind::from_str(scenario).map_err(PyValueError::new_err)?;
    let config = match kind {
        ScenarioKind::Baseline => ScenarioConfig::baseline(),
        ScenarioKind::GreenRule => ScenarioConfig::green_rule(ProductionRule::default()),
        ScenarioKind::CreditThreshold => ScenarioConfig::credit_threshold(credit_ci_cap),
    };
    Ok(scenario::decide_rate(&config, ci_kg))
}

/// kg CO2eq for one hour at `rate` kg/h; `generation` maps source name to
/// energy and is normalised to shares.
#[pyfunction]
fn hourly_emissions(rate: f64, generation: std::collections::BTreeMap<String, f64>) -> PyResult<f64> {
    let mut mix = h2lca::ingest::GenerationMix::default();
    for (name, v) in generation {
        let s = Source::from_str(&name).map_err(|e| PyValueError::new_err(e.to_string()))?;
        mix.set(s, v);
    }
    let shares = mix
        .shares()
        .ok_or_else(|| PyValueError::new_err("generation sums to zero"))?;
    scenario::hourly_emissions(rate, &shares, &LcaModel::australia_h2()).map_err(to_py)
}

fn comparison_dict<'py>(py: Python<'py>, r: &ComparisonRow) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("zone", &r.zone)?;
    d.set_item("scenario", r.scenario.as_str())?;
    d.set_item("elec_cost_aud", r.elec_cost)?;
    d.set_item("op_cost_aud", r.op_cost)?;
    d.set_item("total_cost_aud", r.total_cost)?;
    d.set_item("credits_aud", r.credits)?;
    d.set_item("net_cost_aud", r.net_cost)?;
    d.set_item("h2_t", r.h2_t())?;
    d.set_item("cost_per_kg", r.cost_per_kg)?;
    d.set_item("emissions_t", r.emissions_t())?;
    d.set_item("ci_ratio", r.ci_ratio)?;
    Ok(d)
}

/// Load data, run scenarios and return the comparison table as dicts.
/// Writes the full export set when `out_dir` is given.
#[pyfunction]
#[pyo3(signature = (
    generation, prices, scenarios=vec!["baseline".to_string()], zone=None, year=None,
    ci_source="auto", model=None, out_dir=None, format="csv"
))]
#[allow(clippy::too_many_arguments)]
fn run<'py>(
    py: Python<'py>,
    generation: Vec<PathBuf>,
    prices: Vec<PathBuf>,
    scenarios: Vec<String>,
    zone: Option<String>,
    year: Option<i32>,
    ci_source: &str,
    model: Option<PathBuf>,
    out_dir: Option<PathBuf>,
    format: &str,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let ci_source = CiSource::from_str(ci_source).map_err(PyValueError::new_err)?;
    let format = match format {
        "csv" => OutputFormat::Csv,
        "json" => OutputFormat::Json,
        other => return Err(PyValueError::new_err(format!("unknown format \"{other}\""))),
    };
    let scenarios = scenarios
        .iter()
        .map(|s| ScenarioKind::from_str(s).map(ScenarioConfig::of_kind))
        .collect::<Result<Vec<_>, _>>()
        .map_err(PyValueError::new_err)?;
    let model = h2lca::pipeline::load_model(model.as_deref()).map_err(to_py)?;
    let lca = LcaModel::from_model(&model).map_err(to_py)?;
    let inputs = DataInputs {
        generation,
        prices,
        ..DataInputs::default()
    };
    let filter = SeriesFilter {
        zones: zone.into_iter().collect(),
        year,
        national: None,
    };
    let series = load_series(&inputs, &filter).map_err(to_py)?;
    let spec = RunSpec {
        scenarios,
        ci_source,
        ..RunSpec::default()
    };
    let report = evaluate(&series, &lca, &spec).map_err(to_py)?;
    if let Some(dir) = out_dir {
        export_outputs(&report, format, &dir).map_err(to_py)?;
    }
    report.comparison.iter().map(|r| comparison_dict(py, r)).collect()
}

#[pymodule]
fn h2lca_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySystemModel>()?;
    m.add_class::<PyPartition>()?;
    m.add_function(wrap_pyfunction!(ci_per_kg, m)?)?;
    m.add_function(wrap_pyfunction!(cost_per_kg, m)?)?;
    m.add_function(wrap_pyfunction!(decide_rate, m)?)?;
    m.add_function(wrap_pyfunction!(hourly_emissions, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
