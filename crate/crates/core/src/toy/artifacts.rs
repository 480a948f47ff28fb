//! On-disk outputs of a toy run.
//!
//! Checkpoint layout (UTF-8 text, one item per line):
//!
//! ```text
//! brctc-toy-model 1
//! window <w>
//! feature_dim <d>
//! hidden <h>
//! symbols <V+1>
//! w1 <h·(2w+1)·d values, row-major>
//! b1 <h values>
//! w2 <(V+1)·h values, row-major>
//! b2 <V+1 values>
//! ```
//!
//! Values are written in the shortest form that parses back to the same
//! `f64`, so a save/load round trip is exact.

use std::io::{BufRead, Write};
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Grid, PosteriorGrid};
use crate::risk::RiskSpec;
use crate::toy::data::ToyTaskConfig;
use crate::toy::eval::SpikeStats;
use crate::toy::model::{ModelConfig, ToyModel};
use crate::toy::train::TrainConfig;

pub const CHECKPOINT_MAGIC: &str = "brctc-toy-model";
pub const CHECKPOINT_VERSION: u32 = 1;

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn write_checkpoint<W: Write>(model: &ToyModel, mut out: W) -> Result<()> {
    writeln!(out, "{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}")?;
    writeln!(out, "window {}", model.window)?;
    writeln!(out, "feature_dim {}", model.feature_dim)?;
    writeln!(out, "hidden {}", model.hidden_width())?;
    writeln!(out, "symbols {}", model.symbols())?;
    writeln!(out, "w1 {}", join(model.w1.as_slice()))?;
    writeln!(out, "b1 {}", join(&model.b1))?;
    writeln!(out, "w2 {}", join(model.w2.as_slice()))?;
    writeln!(out, "b2 {}", join(&model.b2))?;
    Ok(())
}

struct Lines<R> {
    inner: std::io::Lines<R>,
}

impl<R: BufRead> Lines<R> {
    fn field(&mut self, key: &str) -> Result<String> {
        let line = self
            .inner
            .next()
            .ok_or_else(|| Error::Parse(format!("checkpoint ends before `{key}`")))??;
        match line.split_once(' ') {
            Some((k, rest)) if k == key => Ok(rest.to_string()),
            _ if line == key => Ok(String::new()),
            _ => Err(Error::Parse(format!("expected `{key}`, found `{line}`"))),
        }
    }

    fn count(&mut self, key: &str) -> Result<usize> {
        self.field(key)?
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("`{key}` is not a count")))
    }

    fn values(&mut self, key: &str, expected: usize) -> Result<Vec<f64>> {
        let values = self
            .field(key)?
            .split_whitespace()
            .map(|s| s.parse::<f64>().map_err(|_| Error::Parse(format!("bad number `{s}` in `{key}`"))))
            .collect::<Result<Vec<_>>>()?;
        if values.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                actual: values.len(),
            });
        }
        Ok(values)
    }
}

pub fn read_checkpoint<R: BufRead>(input: R) -> Result<ToyModel> {
    let mut lines = Lines { inner: input.lines() };
    let version: u32 = lines
        .field(CHECKPOINT_MAGIC)?
        .trim()
        .parse()
        .map_err(|_| Error::Parse("bad checkpoint version".into()))?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Parse(format!("unsupported checkpoint version {version}")));
    }
    let window = lines.count("window")?;
    let feature_dim = lines.count("feature_dim")?;
    let hidden = lines.count("hidden")?;
    let symbols = lines.count("symbols")?;
    let input = (2 * window + 1) * feature_dim;
    let w1 = Grid::from_vec(hidden, input, lines.values("w1", hidden * input)?)?;
    let b1 = lines.values("b1", hidden)?;
    let w2 = Grid::from_vec(symbols, hidden, lines.values("w2", symbols * hidden)?)?;
    let b2 = lines.values("b2", symbols)?;
    Ok(ToyModel {
        window,
        feature_dim,
        w1,
        b1,
        w2,
        b2,
    })
}

pub fn save_checkpoint(model: &ToyModel, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_checkpoint(model, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ToyModel> {
    read_checkpoint(std::io::BufReader::new(std::fs::File::open(path)?))
}

/// `epoch,loss` rows, epochs counted from 0.
pub fn write_loss_trace<W: Write>(trace: &[f64], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(["epoch", "loss"]).map_err(csv_err)?;
    for (epoch, loss) in trace.iter().enumerate() {
        w.write_record([epoch.to_string(), loss.to_string()]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_spike_stats<W: Write>(stats: &[SpikeStats], mut out: W) -> Result<()> {
    for s in stats {
        let line = serde_json::to_string(s).map_err(|e| Error::Io(e.to_string()))?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Binary PGM of the posteriors: one row per symbol (blank on top), one
/// column per frame, white for probability 1.
pub fn heatmap_pgm(y: &PosteriorGrid) -> Result<Vec<u8>> {
    let (frames, symbols) = (y.frames(), y.symbols());
    let mut pixels = Vec::with_capacity(frames * symbols);
    for k in 0..symbols {
        for t in 0..frames {
            pixels.push((y.prob(t, k).clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    let mut buf = Vec::new();
    PnmEncoder::new(&mut buf)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(&pixels, frames as u32, symbols as u32, ExtendedColorType::L8)
        .map_err(|e| Error::Io(e.to_string()))?;
    Ok(buf)
}

/// Everything `train-toy` needs, read from a TOML file with optional
/// `[task]`, `[model]`, `[train]` and `[risk]` tables.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub task: ToyTaskConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub risk: RiskSpec,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.task.validate()?;
        cfg.risk.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::risk::RiskKind;

    fn small_model() -> ToyModel {
        let cfg = ModelConfig {
            window: 1,
            hidden: 3,
            seed: 7,
        };
        ToyModel::new(&cfg, 2, 2).unwrap()
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let model = small_model();
        let mut buf = Vec::new();
        write_checkpoint(&model, &mut buf).unwrap();
        assert!(buf.starts_with(b"brctc-toy-model 1\n"));
        let back = read_checkpoint(&buf[..]).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn checkpoint_rejects_other_versions_and_truncation() {
        let mut buf = Vec::new();
        write_checkpoint(&small_model(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let v2 = text.replacen("brctc-toy-model 1", "brctc-toy-model 2", 1);
        assert!(matches!(read_checkpoint(v2.as_bytes()), Err(Error::Parse(_))));
        let cut: String = text.lines().take(6).map(|l| format!("{l}\n")).collect();
        assert!(read_checkpoint(cut.as_bytes()).is_err());
    }

    #[test]
    fn loss_trace_csv() {
        let mut buf = Vec::new();
        write_loss_trace(&[2.5, 1.25], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "epoch,loss\n0,2.5\n1,1.25\n");
    }

    #[test]
    fn heatmap_header_and_size() {
        let g = Grid::from_rows(&[vec![1.0, 0.0], vec![0.5, 0.5], vec![0.0, 1.0]]).unwrap();
        let y = PosteriorGrid::from_probs(&g).unwrap();
        let pgm = heatmap_pgm(&y).unwrap();
        let header = b"P5\n3 2 255\n";
        assert!(pgm.starts_with(header), "{:?}", String::from_utf8_lossy(&pgm));
        assert_eq!(&pgm[header.len()..], &[255, 128, 0, 0, 128, 255]);
    }

    #[test]
    fn run_config_tables() {
        let cfg = RunConfig::from_toml(
            "[task]\nseed = 3\n[train]\nepochs = 5\n[risk]\nkind = \"downsample\"\nlambda = 10.0\n",
        )
        .unwrap();
        assert_eq!(cfg.task.seed, 3);
        assert_eq!(cfg.task.frames_per_token, 6);
        assert_eq!(cfg.train.epochs, 5);
        assert_eq!(cfg.risk.kind, RiskKind::Downsample);
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        assert!(RunConfig::from_toml("[task]\nbogus = 1\n").is_err());
        assert!(RunConfig::from_toml("[risk]\nkind = \"downsample\"\nlambda = -1.0\n").is_err());
    }
}
