//! Price sources: a CSV path or an inline synthetic specification such as
//! `synth:factor:n=395,T=2500` or `synth:uniform:n=2,T=10000,rho=0.9`.

use std::str::FromStr;

use glassrisk::{load_prices, synth_prices, CorrelationModel, PriceMatrix};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Synthetic universe used when no `--prices` is given.
pub const DEFAULT_SYNTH: &str = "synth:factor:n=395,T=2500";

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n: usize,
    pub observations: usize,
    pub model: CorrelationModel,
    pub seed: u64,
}

impl FromStr for SynthSpec {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        let bad = |why: &str| CliError::Usage(format!("bad synthetic spec {s:?}: {why}"));
        let rest = s.strip_prefix("synth:").ok_or_else(|| bad("missing synth: prefix"))?;
        let (model, params) = rest.split_once(':').unwrap_or((rest, ""));
        let (mut n, mut t, mut factors, mut rho, mut seed) = (None, None, 3usize, None, 0u64);
        for pair in params.split(',').filter(|p| !p.is_empty()) {
            let (key, value) = pair.split_once('=').ok_or_else(|| bad("expected key=value"))?;
            let value = value.trim();
            match key.trim() {
                "n" => n = Some(value.parse().map_err(|_| bad("n"))?),
                "T" | "t" => t = Some(value.parse().map_err(|_| bad("T"))?),
                "f" | "factors" => factors = value.parse().map_err(|_| bad("f"))?,
                "rho" => rho = Some(value.parse().map_err(|_| bad("rho"))?),
                "seed" => seed = value.parse().map_err(|_| bad("seed"))?,
                other => return Err(bad(&format!("unknown key {other:?}"))),
            }
        }
        let model = match model {
            "factor" => CorrelationModel::RandomFactor { factors },
            "uniform" => CorrelationModel::Uniform {
                rho: rho.ok_or_else(|| bad("uniform needs rho"))?,
            },
            other => return Err(bad(&format!("unknown model {other:?}"))),
        };
        Ok(SynthSpec {
            n: n.ok_or_else(|| bad("missing n"))?,
            observations: t.ok_or_else(|| bad("missing T"))?,
            model,
            seed,
        })
    }
}

/// Loaded prices plus what the manifest records about them.
pub struct Source {
    pub prices: PriceMatrix,
    pub dropped_rows: usize,
    pub digest: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn load(source: &str) -> Result<Source, CliError> {
    if source.starts_with("synth:") {
        let spec: SynthSpec = source.parse()?;
        let prices = synth_prices(spec.n, spec.observations, spec.model, spec.seed)?;
        let mut buf = Vec::new();
        prices.write_csv(&mut buf)?;
        Ok(Source {
            prices,
            dropped_rows: 0,
            digest: sha256_hex(&buf),
        })
    } else {
        let bytes = std::fs::read(source).map_err(|e| CliError::Data(format!("cannot read {source}: {e}")))?;
        let loaded = load_prices(source)?;
        Ok(Source {
            prices: loaded.prices,
            dropped_rows: loaded.dropped_rows,
            digest: sha256_hex(&bytes),
        })
    }
}
