//! Request arrival streams: Poisson generation and trace replay.

use std::io::BufRead;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};

/// SplitMix64 finalizer, used to derive independent stream seeds.
pub(crate) fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn stream_seed(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(mix(seed), |acc, &p| mix(acc ^ mix(p)))
}

pub(crate) fn rng_for(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(seed, parts))
}

/// Poisson arrival times in `[0, duration)` for each rate, one independent
/// stream per entry.
pub fn generate_arrivals(rates: &[f64], duration: f64, seed: u64) -> Vec<Vec<f64>> {
    rates
        .iter()
        .enumerate()
        .map(|(i, &rate)| {
            let mut rng = rng_for(seed, &[i as u64]);
            let exp = Exp::new(rate).expect("positive rate");
            let mut out = Vec::with_capacity((rate * duration * 1.05) as usize + 8);
            let mut t = exp.sample(&mut rng);
            while t < duration {
                out.push(t);
                t += exp.sample(&mut rng);
            }
            out
        })
        .collect()
}

/// Chronological merge of per-stream arrivals into `(time, stream)` pairs.
pub fn merge_streams(streams: &[Vec<f64>]) -> Vec<(f64, usize)> {
    let mut all: Vec<(f64, usize)> =
        streams.iter().enumerate().flat_map(|(i, s)| s.iter().map(move |&t| (t, i))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub time: f64,
    pub app: String,
}

/// Reads `timestamp_seconds,app_id` lines. Blank lines and `#` comments are
/// skipped; timestamps must not decrease.
pub fn read_trace(reader: impl BufRead) -> Result<Vec<TraceRecord>> {
    let mut out: Vec<TraceRecord> = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |msg: &str| Error::Parse(format!("trace line {}: {msg}", n + 1));
        let (ts, app) = line.split_once(',').ok_or_else(|| bad("expected `timestamp_seconds,app_id`"))?;
        let time: f64 = match ts.trim().parse() {
            Ok(t) => t,
            // tolerate a header row
            Err(_) if out.is_empty() && n == 0 => continue,
            Err(_) => return Err(bad("timestamp is not a number")),
        };
        if !time.is_finite() || time < 0.0 {
            return Err(bad("timestamp must be finite and >= 0"));
        }
        if out.last().is_some_and(|r| r.time > time) {
            return Err(bad("timestamps decrease"));
        }
        out.push(TraceRecord { time, app: app.trim().to_owned() });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poisson_count_within_three_sigma() {
        let s = generate_arrivals(&[10.0], 1000.0, 42);
        let n = s[0].len() as f64;
        assert!((n - 10_000.0).abs() < 300.0, "{n}");
        assert!(s[0].windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn same_seed_same_stream() {
        assert_eq!(generate_arrivals(&[3.0, 7.0], 50.0, 9), generate_arrivals(&[3.0, 7.0], 50.0, 9));
        assert_ne!(generate_arrivals(&[3.0], 50.0, 9), generate_arrivals(&[3.0], 50.0, 10));
    }

    #[test]
    fn merged_streams_are_sorted() {
        let m = merge_streams(&generate_arrivals(&[5.0, 15.0], 100.0, 3));
        assert!(m.windows(2).all(|w| w[0].0 <= w[1].0));
    }

    #[test]
    fn trace_parsing() {
        let text = "timestamp_seconds,app_id\n0.5,a\n\n# x\n0.5,b\n1.25, a \n";
        let t = read_trace(text.as_bytes()).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t[2], TraceRecord { time: 1.25, app: "a".into() });
        assert!(read_trace("1.0,a\n0.5,a\n".as_bytes()).is_err());
        assert!(read_trace("1.0,a\nfoo,a\n".as_bytes()).is_err());
        assert!(read_trace("1.0\n".as_bytes()).is_err());
    }
}
