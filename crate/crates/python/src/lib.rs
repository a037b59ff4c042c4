//! Python bindings for the swirsr toolkit.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use swirsr_core::afd::{self, AfiKind, Direction, GtConfig};
use swirsr_core::hpf::{self, GainMode, HpfConfig};
use swirsr_core::nn::{self, ModelParams};
use swirsr_core::quality::{self, QWindow};
use swirsr_core::raster;
use swirsr_core::resample::{self, ScaleFactor};
use swirsr_core::synth::{self, SynthConfig};
use swirsr_core::train::{self, TrainConfig};
use swirsr_core::Error;

/// `(epoch, train_loss, val_loss)` per epoch.
type History = Vec<(usize, f64, f64)>;

fn err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn factor(r: usize) -> PyResult<ScaleFactor> {
    ScaleFactor::new(r).map_err(err)
}

/// A single-band raster on a regular grid.
#[pyclass(name = "BandGrid", module = "swirsr", from_py_object)]
#[derive(Clone)]
struct PyBandGrid {
    inner: raster::BandGrid,
}

#[pymethods]
impl PyBandGrid {
    #[new]
    #[pyo3(signature = (name, width, height, gsd_m, values))]
    fn new(
        name: String,
        width: usize,
        height: usize,
        gsd_m: f64,
        values: Vec<f64>,
    ) -> PyResult<Self> {
        let inner = raster::BandGrid::new(name, width, height, gsd_m, values).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn name(&self) -> &str {
        self.inner.name()
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    #[getter]
    fn gsd_m(&self) -> f64 {
        self.inner.gsd_m()
    }

    /// Row-major pixel values.
    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    fn get(&self, x: usize, y: usize) -> PyResult<f64> {
        if x >= self.inner.width() || y >= self.inner.height() {
            return Err(PyValueError::new_err(format!(
                "pixel ({x}, {y}) is outside the grid"
            )));
        }
        Ok(self.inner.get(x, y))
    }

    fn mean(&self) -> f64 {
        self.inner.mean()
    }

    fn __repr__(&self) -> String {
        format!(
            "BandGrid('{}', {}x{}, {} m)",
            self.inner.name(),
            self.inner.width(),
            self.inner.height(),
            self.inner.gsd_m()
        )
    }
}

/// Named bands of one acquisition.
#[pyclass(name = "Scene", module = "swirsr", from_py_object)]
#[derive(Clone)]
struct PyScene {
    inner: raster::Scene,
}

#[pymethods]
impl PyScene {
    #[new]
    #[pyo3(signature = (bands = Vec::new(), label = String::new()))]
    fn new(bands: Vec<PyBandGrid>, label: String) -> PyResult<Self> {
        let inner =
            raster::Scene::from_bands(label, bands.into_iter().map(|b| b.inner)).map_err(err)?;
        Ok(Self { inner })
    }

    /// Reads an SRAF file or every SRAF file in a directory.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: raster::load_scene(path).map_err(err)?,
        })
    }

    /// Writes the scene, one file per resolution; returns the paths written.
    fn save(&self, path: PathBuf) -> PyResult<Vec<PathBuf>> {
        raster::save_sraf(&self.inner, path).map_err(err)
    }

    fn band(&self, name: &str) -> PyResult<PyBandGrid> {
        Ok(PyBandGrid {
            inner: self.inner.band(name).map_err(err)?.clone(),
        })
    }

    fn band_names(&self) -> Vec<String> {
        self.inner.band_names().map(str::to_string).collect()
    }

    fn insert(&mut self, band: PyBandGrid) -> PyResult<()> {
        self.inner.insert(band.inner).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __contains__(&self, name: &str) -> bool {
        self.inner.get(name).is_some()
    }

    fn __repr__(&self) -> String {
        format!("Scene({:?})", self.band_names())
    }
}

/// A boolean raster such as a fire or burned-area map.
#[pyclass(name = "BinaryMap", module = "swirsr", from_py_object)]
#[derive(Clone)]
struct PyBinaryMap {
    inner: afd::BinaryMap,
}

#[pymethods]
impl PyBinaryMap {
    #[new]
    fn new(width: usize, height: usize, bits: Vec<bool>) -> PyResult<Self> {
        Ok(Self {
            inner: afd::BinaryMap::new(width, height, bits).map_err(err)?,
        })
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    #[getter]
    fn bits(&self) -> Vec<bool> {
        self.inner.bits().to_vec()
    }

    fn count(&self) -> usize {
        self.inner.count()
    }

    /// Morphological opening with a square element of side `2 * radius + 1`.
    fn open(&self, radius: usize) -> Self {
        Self {
            inner: afd::morph_open(&self.inner, radius),
        }
    }

    fn export_png(&self, path: PathBuf) -> PyResult<()> {
        self.inner.export_png(path).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "BinaryMap({}x{}, {} set)",
            self.inner.width(),
            self.inner.height(),
            self.inner.count()
        )
    }
}

/// Network weights together with the bands they expect.
#[pyclass(name = "Model", module = "swirsr", from_py_object)]
#[derive(Clone)]
struct PyModel {
    params: ModelParams,
    adam: Option<nn::AdamState>,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let (params, adam) = nn::load_params(path).map_err(err)?;
        Ok(Self { params, adam })
    }

    /// Network that reproduces bicubic upsampling of the SWIR bands.
    #[staticmethod]
    #[pyo3(signature = (swir = vec!["B11".to_string(), "B12".to_string()], guide = vec!["B08".to_string()]))]
    fn delta_identity(swir: Vec<String>, guide: Vec<String>) -> PyResult<Self> {
        let cfg = TrainConfig {
            swir_bands: swir,
            guide_bands: guide,
            ..TrainConfig::default()
        };
        let params = ModelParams::delta_identity(&cfg.arch(), cfg.meta("identity")).map_err(err)?;
        Ok(Self { params, adam: None })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        nn::save_params(path, &self.params, self.adam.as_ref()).map_err(err)
    }

    fn super_resolve(&self, scene: &PyScene) -> PyResult<Vec<PyBandGrid>> {
        let bands = train::super_resolve(&scene.inner, &self.params).map_err(err)?;
        Ok(bands
            .into_iter()
            .map(|inner| PyBandGrid { inner })
            .collect())
    }

    #[getter]
    fn parameter_count(&self) -> usize {
        self.params.parameter_count()
    }

    #[getter]
    fn swir_bands(&self) -> Vec<String> {
        self.params.meta.swir_bands.clone()
    }

    #[getter]
    fn guide_bands(&self) -> Vec<String> {
        self.params.meta.guide_bands.clone()
    }
}

#[pyfunction]
#[pyo3(signature = (band, ratio = 2))]
fn downsample_box(band: &PyBandGrid, ratio: usize) -> PyResult<PyBandGrid> {
    let inner = resample::downsample_box(&band.inner, factor(ratio)?).map_err(err)?;
    Ok(PyBandGrid { inner })
}

#[pyfunction]
#[pyo3(signature = (band, ratio = 2))]
fn upsample_nearest(band: &PyBandGrid, ratio: usize) -> PyResult<PyBandGrid> {
    Ok(PyBandGrid {
        inner: resample::upsample_nearest(&band.inner, factor(ratio)?),
    })
}

#[pyfunction]
#[pyo3(signature = (band, ratio = 2))]
fn upsample_bicubic(band: &PyBandGrid, ratio: usize) -> PyResult<PyBandGrid> {
    let inner = resample::upsample_bicubic(&band.inner, factor(ratio)?).map_err(err)?;
    Ok(PyBandGrid { inner })
}

/// High-pass-filter fusion; `gain` is "unit" or "std".
#[pyfunction]
#[pyo3(signature = (swir, guide, box_size = 5, gain = "unit"))]
fn hpf_fuse(
    swir: &PyBandGrid,
    guide: &PyBandGrid,
    box_size: usize,
    gain: &str,
) -> PyResult<PyBandGrid> {
    let gain_mode = match gain {
        "unit" => GainMode::Unit,
        "std" => GainMode::StdMatch,
        other => return Err(PyValueError::new_err(format!("unknown gain mode {other}"))),
    };
    let cfg = HpfConfig {
        box_size,
        gain_mode,
    };
    let inner = hpf::hpf_fuse(&swir.inner, &guide.inner, &cfg).map_err(err)?;
    Ok(PyBandGrid { inner })
}

fn grids(bands: &[PyBandGrid]) -> Vec<&raster::BandGrid> {
    bands.iter().map(|b| &b.inner).collect()
}

#[pyfunction]
fn sam(reference: Vec<PyBandGrid>, estimate: Vec<PyBandGrid>) -> PyResult<f64> {
    quality::sam(&grids(&reference), &grids(&estimate)).map_err(err)
}

/// Q-index, global or averaged over sliding `window x window` blocks.
#[pyfunction]
#[pyo3(signature = (reference, estimate, window = None))]
fn q_index(reference: &PyBandGrid, estimate: &PyBandGrid, window: Option<usize>) -> PyResult<f64> {
    let window = window.map_or(QWindow::Global, QWindow::Sliding);
    quality::q_index(&reference.inner, &estimate.inner, window).map_err(err)
}

/// ERGAS; `ratio` is the fine over coarse sampling distance.
#[pyfunction]
#[pyo3(signature = (reference, estimate, ratio = 0.5))]
fn ergas(reference: Vec<PyBandGrid>, estimate: Vec<PyBandGrid>, ratio: f64) -> PyResult<f64> {
    quality::ergas(&grids(&reference), &grids(&estimate), ratio).map_err(err)
}

#[pyfunction]
fn hcc(reference: &PyBandGrid, estimate: &PyBandGrid) -> PyResult<f64> {
    quality::hcc(&reference.inner, &estimate.inner).map_err(err)
}

#[pyfunction]
fn ndvi(nir: &PyBandGrid, red: &PyBandGrid) -> PyResult<PyBandGrid> {
    Ok(PyBandGrid {
        inner: afd::ndvi(&nir.inner, &red.inner).map_err(err)?,
    })
}

/// Active-fire index `kind` (1, 2 or 3) of a scene.
#[pyfunction]
fn compute_afi(kind: u8, scene: &PyScene) -> PyResult<PyBandGrid> {
    let kind = AfiKind::from_index(kind).map_err(err)?;
    Ok(PyBandGrid {
        inner: afd::compute_afi(kind, &scene.inner).map_err(err)?.index,
    })
}

#[pyfunction]
#[pyo3(signature = (index, alpha = 1.0, direction = "greater"))]
fn threshold_map(index: &PyBandGrid, alpha: f64, direction: &str) -> PyResult<PyBinaryMap> {
    let direction: Direction = direction.parse().map_err(err)?;
    let inner = afd::threshold_map(&index.inner, alpha, direction).map_err(err)?;
    Ok(PyBinaryMap { inner })
}

#[pyfunction]
#[pyo3(signature = (before, after, tau = 0.2, radius = 1))]
fn build_ground_truth(
    before: &PyScene,
    after: &PyScene,
    tau: f64,
    radius: usize,
) -> PyResult<PyBinaryMap> {
    let cfg = GtConfig {
        ndvi_delta_threshold: tau,
        opening_radius: radius,
    };
    let inner = afd::build_ground_truth(&before.inner, &after.inner, &cfg).map_err(err)?;
    Ok(PyBinaryMap { inner })
}

/// Precision, recall, IoU and the confusion counts as a dict.
#[pyfunction]
fn classification_scores<'py>(
    py: Python<'py>,
    pred: &PyBinaryMap,
    gt: &PyBinaryMap,
) -> PyResult<Bound<'py, PyDict>> {
    let s = afd::classification_scores(&pred.inner, &gt.inner).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("precision", s.precision)?;
    d.set_item("recall", s.recall)?;
    d.set_item("iou", s.iou)?;
    d.set_item("tp", s.tp)?;
    d.set_item("fp", s.fp)?;
    d.set_item("fn", s.fn_)?;
    Ok(d)
}

/// Synthetic fire scene as a dict with `scene`, `before`, `reference_swir`
/// and `fire_gt`.
#[pyfunction]
#[pyo3(signature = (size = 256, seed = 0))]
fn generate_scene<'py>(py: Python<'py>, size: usize, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    let s = synth::generate_scene(&SynthConfig::with_size(size, size, seed)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("scene", PyScene { inner: s.scene })?;
    d.set_item("before", PyScene { inner: s.before })?;
    d.set_item(
        "reference_swir",
        PyScene {
            inner: s.reference_swir,
        },
    )?;
    d.set_item("fire_gt", PyBinaryMap { inner: s.fire_gt })?;
    Ok(d)
}

/// Trains a network on the reduced-resolution pairs of `scenes`. Passing
/// `init` fine-tunes an existing model.
#[pyfunction]
#[pyo3(signature = (scenes, epochs = 200, patches = 10_000, patch = 17, batch = 32, eta = 0.002, seed = 0, init = None))]
#[allow(clippy::too_many_arguments)]
fn train_model(
    py: Python<'_>,
    scenes: Vec<PyScene>,
    epochs: usize,
    patches: usize,
    patch: usize,
    batch: usize,
    eta: f64,
    seed: u64,
    init: Option<PyModel>,
) -> PyResult<(PyModel, History)> {
    let cfg = TrainConfig {
        epochs,
        patch_count: patches,
        patch,
        batch,
        eta,
        seed,
        ..TrainConfig::default()
    };
    let pairs = scenes
        .iter()
        .map(|s| train::make_wald_pair(&s.inner, &cfg))
        .collect::<Result<Vec<_>, _>>()
        .map_err(err)?;
    let init = init.map(|m| m.params);
    let outcome = py
        .detach(|| train::train(&pairs, &cfg, init))
        .map_err(err)?;
    let history = outcome
        .history
        .iter()
        .map(|h| (h.epoch, h.train_loss, h.val_loss))
        .collect();
    let model = PyModel {
        params: outcome.params,
        adam: Some(outcome.adam),
    };
    Ok((model, history))
}

/// Runs the command-line tool with `args` (without the program name) and
/// returns its exit code.
#[pyfunction]
fn run_cli(args: Vec<String>) -> i32 {
    swirsr_core::cli::run(std::iter::once("swirsr".to_string()).chain(args))
}

#[pymodule]
fn swirsr(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyBandGrid>()?;
    m.add_class::<PyScene>()?;
    m.add_class::<PyBinaryMap>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(downsample_box, m)?)?;
    m.add_function(wrap_pyfunction!(upsample_nearest, m)?)?;
    m.add_function(wrap_pyfunction!(upsample_bicubic, m)?)?;
    m.add_function(wrap_pyfunction!(hpf_fuse, m)?)?;
    m.add_function(wrap_pyfunction!(sam, m)?)?;
    m.add_function(wrap_pyfunction!(q_index, m)?)?;
    m.add_function(wrap_pyfunction!(ergas, m)?)?;
    m.add_function(wrap_pyfunction!(hcc, m)?)?;
    m.add_function(wrap_pyfunction!(ndvi, m)?)?;
    m.add_function(wrap_pyfunction!(compute_afi, m)?)?;
    m.add_function(wrap_pyfunction!(threshold_map, m)?)?;
    m.add_function(wrap_pyfunction!(build_ground_truth, m)?)?;
    m.add_function(wrap_pyfunction!(classification_scores, m)?)?;
    m.add_function(wrap_pyfunction!(generate_scene, m)?)?;
    m.add_function(wrap_pyfunction!(train_model, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
