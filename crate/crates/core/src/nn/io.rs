//! Weights file: a JSON document holding the architecture, every kernel as
//! nested `[out][in][ky][kx]` arrays, biases, and optionally the optimizer
//! state. Floats are written in shortest round-trip form so a save/load cycle
//! is bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::conv::ConvLayerParams;
use super::model::{activation_for_layer, ModelMeta, ModelParams};
use crate::{Error, Result};

pub const WEIGHTS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSet {
    pub swir: Vec<String>,
    pub guide: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchRecord {
    pub in_channels: usize,
    pub widths: Vec<usize>,
    pub kernel: Vec<usize>,
    pub bands: BandSet,
    pub ratio: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub kernels: Vec<Vec<Vec<Vec<f64>>>>,
    pub biases: Vec<f64>,
}

/// On-disk form of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsFile {
    pub version: u32,
    pub arch: ArchRecord,
    #[serde(default)]
    pub provenance: String,
    pub layers: Vec<LayerRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adam_state: Option<AdamState>,
}

impl WeightsFile {
    pub fn from_params(params: &ModelParams, adam: Option<&AdamState>) -> Self {
        let arch = params.arch();
        let layers = params
            .layers
            .iter()
            .map(|l| {
                let k = l.kernel;
                let kernels = (0..l.out_channels)
                    .map(|m| {
                        (0..l.in_channels)
                            .map(|c| {
                                (0..k)
                                    .map(|ky| (0..k).map(|kx| l.weight(m, c, ky, kx)).collect())
                                    .collect()
                            })
                            .collect()
                    })
                    .collect();
                LayerRecord {
                    kernels,
                    biases: l.biases.clone(),
                }
            })
            .collect();
        Self {
            version: WEIGHTS_VERSION,
            arch: ArchRecord {
                in_channels: arch.in_channels,
                widths: arch.widths,
                kernel: arch.kernels,
                bands: BandSet {
                    swir: params.meta.swir_bands.clone(),
                    guide: params.meta.guide_bands.clone(),
                },
                ratio: params.meta.ratio,
            },
            provenance: params.meta.provenance.clone(),
            layers,
            adam_state: adam.cloned(),
        }
    }

    pub fn into_params(self) -> Result<(ModelParams, Option<AdamState>)> {
        if self.version != WEIGHTS_VERSION {
            return Err(Error::MalformedWeights(format!(
                "unsupported version {}",
                self.version
            )));
        }
        let a = &self.arch;
        if a.widths.len() != self.layers.len() || a.kernel.len() != self.layers.len() {
            return Err(Error::InvalidArchitecture(format!(
                "architecture lists {} widths and {} kernels for {} layers",
                a.widths.len(),
                a.kernel.len(),
                self.layers.len()
            )));
        }
        let mut in_c = a.in_channels;
        let mut layers = Vec::with_capacity(self.layers.len());
        for (i, rec) in self.layers.into_iter().enumerate() {
            let (m, k) = (a.widths[i], a.kernel[i]);
            let shape_ok = rec.kernels.len() == m
                && rec.kernels.iter().all(|per_in| {
                    per_in.len() == in_c
                        && per_in
                            .iter()
                            .all(|rows| rows.len() == k && rows.iter().all(|r| r.len() == k))
                });
            if !shape_ok {
                return Err(Error::MalformedWeights(format!(
                    "layer {} kernels are not shaped {m}x{in_c}x{k}x{k}",
                    i + 1
                )));
            }
            let mut layer = ConvLayerParams::zeros(m, in_c, k, activation_for_layer(i));
            for (o, per_in) in rec.kernels.iter().enumerate() {
                for (c, rows) in per_in.iter().enumerate() {
                    for (ky, row) in rows.iter().enumerate() {
                        for (kx, &v) in row.iter().enumerate() {
                            *layer.weight_mut(o, c, ky, kx) = v;
                        }
                    }
                }
            }
            layer.biases = rec.biases;
            layer.validate()?;
            layers.push(layer);
            in_c = m;
        }
        let meta = ModelMeta {
            swir_bands: a.bands.swir.clone(),
            guide_bands: a.bands.guide.clone(),
            ratio: a.ratio,
            provenance: self.provenance,
        };
        let params = ModelParams::new(layers, meta)?;
        if let Some(state) = &self.adam_state {
            state.validate()?;
            if !state.matches(&params) {
                return Err(Error::MalformedWeights(
                    "optimizer state does not match the layers".into(),
                ));
            }
        }
        Ok((params, self.adam_state))
    }
}

pub fn params_to_json(params: &ModelParams, adam: Option<&AdamState>) -> String {
    serde_json::to_string_pretty(&WeightsFile::from_params(params, adam))
        .expect("weights serialize to JSON")
}

pub fn params_from_json(text: &str) -> Result<(ModelParams, Option<AdamState>)> {
    let file: WeightsFile =
        serde_json::from_str(text).map_err(|e| Error::MalformedWeights(e.to_string()))?;
    file.into_params()
}

pub fn save_params(
    path: impl AsRef<Path>,
    params: &ModelParams,
    adam: Option<&AdamState>,
) -> Result<()> {
    crate::raster::write_text(path.as_ref(), &params_to_json(params, adam))
}

pub fn load_params(path: impl AsRef<Path>) -> Result<(ModelParams, Option<AdamState>)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    params_from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{model_forward, Arch, Gradients, Tensor3};

    fn meta() -> ModelMeta {
        ModelMeta {
            swir_bands: vec!["B11".into(), "B12".into()],
            guide_bands: vec!["B08".into()],
            ratio: 2,
            provenance: "unit test".into(),
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut p = ModelParams::init(&Arch::standard(3, 2), meta(), 17).unwrap();
        p.layers[1].biases[3] = 0.1 + 0.2;
        let mut adam = AdamState::new(&p, 0.002, 0.9, 0.999).unwrap();
        let mut g = Gradients::zeros_like(&p);
        g.layers[0].kernels[5] = 1e-3;
        adam.step(&mut p, &g).unwrap();

        let (back, state) = params_from_json(&params_to_json(&p, Some(&adam))).unwrap();
        assert_eq!(back, p);
        assert_eq!(state.unwrap(), adam);
        for (a, b) in back.tensors().flatten().zip(p.tensors().flatten()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }

        let x = Tensor3::new(5, 5, 3, (0..75).map(|i| i as f64 / 75.0).collect()).unwrap();
        assert_eq!(
            model_forward(&x, &back).unwrap(),
            model_forward(&x, &p).unwrap()
        );
    }

    #[test]
    fn two_layer_file_rejected() {
        let p = ModelParams::init(&Arch::standard(3, 2), meta(), 1).unwrap();
        let mut file = WeightsFile::from_params(&p, None);
        file.layers.pop();
        file.arch.widths.pop();
        file.arch.kernel.pop();
        assert!(matches!(
            file.into_params(),
            Err(Error::InvalidArchitecture(_))
        ));
    }

    #[test]
    fn malformed_json_rejected() {
        assert!(matches!(
            params_from_json("{\"version\": 1}"),
            Err(Error::MalformedWeights(_))
        ));
        let p = ModelParams::init(&Arch::standard(3, 2), meta(), 1).unwrap();
        let mut file = WeightsFile::from_params(&p, None);
        file.layers[0].kernels[0].pop();
        assert!(matches!(
            file.into_params(),
            Err(Error::MalformedWeights(_))
        ));
    }
}
