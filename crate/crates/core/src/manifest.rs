//! JSON model manifest and sequence CSV files.
//!
//! Weights are stored as raw integers of their tensor's fixed-point format
//! (weights in `formats.weight`, biases in `formats.bias`), written in base 10.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixedpoint::{q, ActTables, FixedFormat};
use crate::lstm::{LayerSpec, Matrix, ModelSpec, TensorFormats, GATE_ORDER};
use crate::perf::HwProfile;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerEntry {
    pub units: usize,
    pub return_sequences: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenseEntry {
    pub units: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerWeights {
    /// `4 * units` rows of `lx` raw values.
    pub wx: Vec<Vec<i64>>,
    /// `4 * units` rows of `units` raw values.
    pub wh: Vec<Vec<i64>>,
    pub b: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenseWeightsEntry {
    pub w: Vec<Vec<i64>>,
    pub b: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsEntry {
    pub layers: Vec<LayerWeights>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dense: Option<DenseWeightsEntry>,
}

/// Hardware profile named by a built-in or given in full.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileRef {
    Name(String),
    Custom(HwProfile),
}

impl ProfileRef {
    pub fn resolve(&self) -> Result<HwProfile> {
        match self {
            ProfileRef::Name(n) => HwProfile::builtin(n).ok_or_else(|| {
                Error::arg(format!(
                    "unknown profile `{n}` (known: {})",
                    HwProfile::builtin_names().join(", ")
                ))
            }),
            ProfileRef::Custom(p) => {
                p.validate()?;
                Ok(p.clone())
            }
        }
    }
}

fn one() -> usize {
    1
}

fn default_gate_order() -> String {
    GATE_ORDER.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default = "one")]
    pub input_width: usize,
    pub timesteps: usize,
    /// Window length used for training when it differs from `timesteps`;
    /// longer windows are cut into consecutive `timesteps`-long pieces.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_timesteps: Option<usize>,
    pub layers: Vec<LayerEntry>,
    #[serde(default)]
    pub repeat_vector_after: Option<usize>,
    #[serde(default)]
    pub dense: Option<DenseEntry>,
    #[serde(default = "default_gate_order")]
    pub gate_order: String,
    #[serde(default)]
    pub formats: TensorFormats,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<ProfileRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub act_tables: Option<ActTables>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<WeightsEntry>,
}

fn field_err(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Manifest {
        path: path.into(),
        message: message.into(),
    }
}

fn raw_rows(m: &Matrix, fmt: FixedFormat) -> Vec<Vec<i64>> {
    (0..m.rows)
        .map(|r| m.row(r).iter().map(|&v| q(v, fmt).raw()).collect())
        .collect()
}

fn raw_vec(v: &[f64], fmt: FixedFormat) -> Vec<i64> {
    v.iter().map(|&x| q(x, fmt).raw()).collect()
}

fn decode_rows(
    rows: &[Vec<i64>],
    shape: (usize, usize),
    fmt: FixedFormat,
    path: &str,
) -> Result<Matrix> {
    if rows.len() != shape.0 {
        return Err(field_err(
            path,
            format!("expected {} rows, found {}", shape.0, rows.len()),
        ));
    }
    let mut data = Vec::with_capacity(shape.0 * shape.1);
    for (r, row) in rows.iter().enumerate() {
        if row.len() != shape.1 {
            return Err(field_err(
                format!("{path}[{r}]"),
                format!("expected {} values, found {}", shape.1, row.len()),
            ));
        }
        data.extend(decode_vec(row, fmt, &format!("{path}[{r}]"))?);
    }
    Matrix::from_vec(shape.0, shape.1, data)
}

fn decode_vec(v: &[i64], fmt: FixedFormat, path: &str) -> Result<Vec<f64>> {
    v.iter()
        .enumerate()
        .map(|(i, &raw)| {
            if fmt.fits(raw) {
                Ok(raw as f64 * fmt.lsb())
            } else {
                Err(field_err(
                    format!("{path}[{i}]"),
                    format!("raw value {raw} does not fit {fmt}"),
                ))
            }
        })
        .collect()
}

impl Manifest {
    /// Parse with field-level diagnostics: errors name the JSON path and the
    /// line and column where parsing stopped.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let m: Manifest = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            field_err(path, format!("{inner}"))
        })?;
        if m.schema != SCHEMA_VERSION {
            return Err(field_err(
                "schema",
                format!(
                    "unsupported schema {} (expected {SCHEMA_VERSION})",
                    m.schema
                ),
            ));
        }
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn specs(&self) -> Result<Vec<LayerSpec>> {
        let mut lx = self.input_width;
        let mut specs = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            let s = LayerSpec::new(lx, l.units, l.return_sequences, self.timesteps)
                .map_err(|e| field_err(format!("layers[{i}]"), e.to_string()))?;
            specs.push(s);
            lx = l.units;
        }
        Ok(specs)
    }

    /// Build the model. A manifest without weights yields zero weights.
    pub fn to_model(&self) -> Result<ModelSpec> {
        if self.gate_order != GATE_ORDER {
            return Err(field_err(
                "gate_order",
                format!(
                    "unsupported gate order `{}` (expected `{GATE_ORDER}`)",
                    self.gate_order
                ),
            ));
        }
        if self.layers.is_empty() {
            return Err(field_err("layers", "at least one layer is required"));
        }
        self.formats
            .validate()
            .map_err(|e| field_err("formats", e.to_string()))?;
        let specs = self.specs()?;
        let mut model = ModelSpec::from_specs(
            &specs,
            self.repeat_vector_after,
            self.dense.as_ref().map(|d| d.units),
        )
        .map_err(|e| field_err("layers", e.to_string()))?;
        model.formats = self.formats;
        if let Some(w) = &self.weights {
            let f = self.formats;
            if w.layers.len() != specs.len() {
                return Err(field_err(
                    "weights.layers",
                    format!("{} weight sets for {} layers", w.layers.len(), specs.len()),
                ));
            }
            for (i, (lw, s)) in w.layers.iter().zip(&specs).enumerate() {
                let p = format!("weights.layers[{i}]");
                let target = &mut model.layers[i].weights;
                target.wx = decode_rows(&lw.wx, (4 * s.lh, s.lx), f.weight, &format!("{p}.wx"))?;
                target.wh = decode_rows(&lw.wh, (4 * s.lh, s.lh), f.weight, &format!("{p}.wh"))?;
                if lw.b.len() != 4 * s.lh {
                    return Err(field_err(
                        format!("{p}.b"),
                        format!("expected {} values, found {}", 4 * s.lh, lw.b.len()),
                    ));
                }
                target.b = decode_vec(&lw.b, f.bias, &format!("{p}.b"))?;
            }
            match (&w.dense, &mut model.dense) {
                (Some(dw), Some(d)) => {
                    let (rows, cols) = (d.outputs(), d.inputs());
                    d.w = decode_rows(&dw.w, (rows, cols), f.weight, "weights.dense.w")?;
                    if dw.b.len() != rows {
                        return Err(field_err(
                            "weights.dense.b",
                            format!("expected {rows} values, found {}", dw.b.len()),
                        ));
                    }
                    d.b = decode_vec(&dw.b, f.bias, "weights.dense.b")?;
                }
                (None, None) => {}
                (Some(_), None) => {
                    return Err(field_err(
                        "weights.dense",
                        "dense weights given but the model has no dense head",
                    ))
                }
                (None, Some(_)) => return Err(field_err("weights.dense", "missing dense weights")),
            }
        }
        if let Some(t) = &self.act_tables {
            t.validate()
                .map_err(|e| field_err("act_tables", e.to_string()))?;
        }
        model.validate()?;
        Ok(model)
    }

    /// Describe `model`, optionally with its weights quantized to raw integers.
    pub fn from_model(model: &ModelSpec, name: Option<&str>, with_weights: bool) -> Self {
        let f = model.formats;
        let weights = with_weights.then(|| WeightsEntry {
            layers: model
                .layers
                .iter()
                .map(|l| LayerWeights {
                    wx: raw_rows(&l.weights.wx, f.weight),
                    wh: raw_rows(&l.weights.wh, f.weight),
                    b: raw_vec(&l.weights.b, f.bias),
                })
                .collect(),
            dense: model.dense.as_ref().map(|d| DenseWeightsEntry {
                w: raw_rows(&d.w, f.weight),
                b: raw_vec(&d.b, f.bias),
            }),
        });
        Manifest {
            schema: SCHEMA_VERSION,
            name: name.map(str::to_string),
            input_width: model.input_width(),
            timesteps: model.timesteps(),
            train_timesteps: None,
            layers: model
                .layers
                .iter()
                .map(|l| LayerEntry {
                    units: l.spec.lh,
                    return_sequences: l.spec.return_sequences,
                })
                .collect(),
            repeat_vector_after: model.repeat_vector_after,
            dense: model
                .dense
                .as_ref()
                .map(|d| DenseEntry { units: d.outputs() }),
            gate_order: GATE_ORDER.to_string(),
            formats: f,
            profile: None,
            act_tables: None,
            weights,
        }
    }
}

/// One row per timestep with columns `f0, f1, ...`.
pub fn read_sequence_csv<R: Read>(input: R) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .enumerate()
            .map(|(c, f)| match f.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::Data(format!(
                    "line {}, column {}: `{f}` is not a finite number",
                    i + 2,
                    c + 1
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(row);
    }
    Ok(out)
}

pub fn write_sequence_csv<W: Write>(seq: &[Vec<f64>], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let width = seq.first().map_or(0, Vec::len);
    w.write_record((0..width).map(|i| format!("f{i}")))?;
    for row in seq {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm::model_forward;
    use crate::reference;

    const MINIMAL: &str = r#"{
        "schema": 1,
        "timesteps": 8,
        "layers": [{"units": 9, "return_sequences": false}, {"units": 9, "return_sequences": true}],
        "repeat_vector_after": 0,
        "dense": {"units": 1}
    }"#;

    #[test]
    fn minimal_manifest_is_the_small_model() {
        let m = Manifest::from_json(MINIMAL).unwrap();
        assert_eq!(m.to_model().unwrap(), reference::small_model());
        assert_eq!(m.gate_order, "ifgo");
    }

    #[test]
    fn weights_roundtrip_bit_exact() {
        let mut model = reference::nominal_model();
        model.randomize(4, 1.0);
        let text = Manifest::from_model(&model, Some("nominal"), true).to_json();
        let back = Manifest::from_json(&text).unwrap().to_model().unwrap();
        let f = model.formats;
        for (a, b) in model.layers.iter().zip(&back.layers) {
            for (x, y) in a.weights.wx.data.iter().zip(&b.weights.wx.data) {
                assert_eq!(q(*x, f.weight).raw() as f64 * f.weight.lsb(), *y);
            }
        }
        // a second trip is the identity
        let again =
            Manifest::from_json(&Manifest::from_model(&back, Some("nominal"), true).to_json())
                .unwrap()
                .to_model()
                .unwrap();
        assert_eq!(again, back);
        let input: Vec<Vec<f64>> = (0..8).map(|t| vec![t as f64 / 8.0]).collect();
        assert_eq!(
            model_forward(&input, &again).unwrap(),
            model_forward(&input, &back).unwrap()
        );
    }

    #[test]
    fn diagnostics_name_the_field() {
        let bad = MINIMAL.replace(
            r#""units": 9, "return_sequences": true"#,
            r#""units": "nine", "return_sequences": true"#,
        );
        let err = Manifest::from_json(&bad).unwrap_err().to_string();
        assert!(
            err.contains("layers[1].units") && err.contains("line"),
            "{err}"
        );

        let err = Manifest::from_json(&MINIMAL.replace("\"schema\": 1", "\"schema\": 2"))
            .unwrap_err()
            .to_string();
        assert!(err.contains("schema"), "{err}");

        let err = Manifest::from_json(&MINIMAL.replace("\"timesteps\"", "\"timestep\""))
            .unwrap_err()
            .to_string();
        assert!(err.contains("timestep"), "{err}");

        let mut m = Manifest::from_model(&reference::small_model(), None, true);
        m.weights.as_mut().unwrap().layers[1].b[3] = 1 << 40;
        let err = m.to_model().unwrap_err().to_string();
        assert!(err.contains("weights.layers[1].b[3]"), "{err}");

        let mut m = Manifest::from_model(&reference::small_model(), None, true);
        m.weights.as_mut().unwrap().layers[0].wx.pop();
        assert!(m
            .to_model()
            .unwrap_err()
            .to_string()
            .contains("weights.layers[0].wx"));

        let mut m = Manifest::from_json(MINIMAL).unwrap();
        m.gate_order = "fgio".into();
        assert!(m.to_model().is_err());
    }

    #[test]
    fn profile_override() {
        let named = MINIMAL.replace(
            "\"schema\": 1,",
            "\"schema\": 1, \"profile\": \"u250-300MHz\",",
        );
        let m = Manifest::from_json(&named).unwrap();
        assert_eq!(m.profile.unwrap().resolve().unwrap(), HwProfile::u250());
        let custom = serde_json::to_string(&HwProfile {
            lt_mult: 2,
            ..HwProfile::zynq7045()
        })
        .unwrap();
        let text = MINIMAL.replace(
            "\"schema\": 1,",
            &format!("\"schema\": 1, \"profile\": {custom},"),
        );
        let p = Manifest::from_json(&text)
            .unwrap()
            .profile
            .unwrap()
            .resolve()
            .unwrap();
        assert_eq!(p.lt_mult, 2);
    }

    #[test]
    fn sequence_csv() {
        let seq = vec![vec![0.5, -1.0], vec![0.25, 2.0]];
        let mut buf = Vec::new();
        write_sequence_csv(&seq, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "f0,f1\n0.5,-1\n0.25,2\n"
        );
        assert_eq!(read_sequence_csv(buf.as_slice()).unwrap(), seq);
        assert!(read_sequence_csv("f0\nx\n".as_bytes()).is_err());
    }
}
