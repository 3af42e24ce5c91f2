//! Network checkpoints: a versioned text container with layer dimensions
//! and row-major parameters stored as f64 bit patterns, so round trips are
//! bit-exact and files stay diffable.

use std::fmt::Write as _;
use std::path::Path;

use crate::agent::QNetwork;
use crate::error::{Error, Result};

const MAGIC: &str = "llmlink-checkpoint v1";

pub fn to_string(net: &QNetwork) -> String {
    let mut s = String::new();
    writeln!(s, "{MAGIC}").unwrap();
    let dims = net.dims();
    writeln!(s, "dims {}", dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(" "))
        .unwrap();
    for (k, layer) in net.layers.iter().enumerate() {
        writeln!(s, "layer {k}").unwrap();
        for chunk in [&layer.weights, &layer.biases] {
            for v in chunk {
                writeln!(s, "{:016x}", v.to_bits()).unwrap();
            }
        }
    }
    s
}

pub fn from_string(text: &str) -> Result<QNetwork> {
    let mut lines = text.lines();
    if lines.next() != Some(MAGIC) {
        return Err(Error::Checkpoint("bad magic line".into()));
    }
    let dims_line = lines
        .next()
        .ok_or_else(|| Error::Checkpoint("missing dims line".into()))?;
    let dims: Vec<usize> = dims_line
        .strip_prefix("dims ")
        .ok_or_else(|| Error::Checkpoint("missing dims prefix".into()))?
        .split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|e| Error::Checkpoint(e.to_string())))
        .collect::<Result<_>>()?;
    if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
        return Err(Error::Checkpoint("invalid dims".into()));
    }

    let mut layers = Vec::with_capacity(dims.len() - 1);
    for (k, w) in dims.windows(2).enumerate() {
        let (in_dim, out_dim) = (w[0], w[1]);
        let marker = lines
            .next()
            .ok_or_else(|| Error::Checkpoint(format!("missing layer {k} marker")))?;
        if marker != format!("layer {k}") {
            return Err(Error::Checkpoint(format!("expected 'layer {k}', got '{marker}'")));
        }
        let mut read_values = |n: usize| -> Result<Vec<f64>> {
            (0..n)
                .map(|_| {
                    let line = lines
                        .next()
                        .ok_or_else(|| Error::Checkpoint("truncated parameter block".into()))?;
                    let bits = u64::from_str_radix(line.trim(), 16)
                        .map_err(|e| Error::Checkpoint(e.to_string()))?;
                    Ok(f64::from_bits(bits))
                })
                .collect()
        };
        let weights = read_values(in_dim * out_dim)?;
        let biases = read_values(out_dim)?;
        layers.push(crate::agent::net::Layer { weights, biases, in_dim, out_dim });
    }
    if lines.next().is_some() {
        return Err(Error::Checkpoint("trailing content after parameters".into()));
    }
    Ok(QNetwork { layers })
}

pub fn save(net: &QNetwork, path: &Path) -> Result<()> {
    std::fs::write(path, to_string(net))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<QNetwork> {
    from_string(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bit_exact_round_trip() {
        let net = QNetwork::new(&[3, 64, 50], &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let back = from_string(&to_string(&net)).unwrap();
        assert_eq!(net, back);
        // Including awkward values.
        let mut odd = net;
        odd.layers[0].weights[0] = f64::MIN_POSITIVE;
        odd.layers[0].weights[1] = -0.0;
        odd.layers[0].weights[2] = 1e308;
        let back = from_string(&to_string(&odd)).unwrap();
        assert_eq!(odd.layers[0].weights[..3], back.layers[0].weights[..3]);
    }

    #[test]
    fn corrupt_files_rejected() {
        let net = QNetwork::new(&[2, 3], &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let text = to_string(&net);
        assert!(from_string(&text.replace(MAGIC, "other")).is_err());
        assert!(from_string(&text[..text.len() - 20]).is_err());
        let mut extra = text.clone();
        extra.push_str("deadbeefdeadbeef\n");
        assert!(from_string(&extra).is_err());
    }
}
