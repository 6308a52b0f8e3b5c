//! Execution latency of one dispatched batch.

use rand::Rng;

use crate::error::{Error, Result};
use crate::profile::{GpuPlatform, ModelProfile};

/// Wall time to finish `l0` seconds of exclusive GPU work on an `mem`-unit
/// share, for a batch arriving `phase` seconds into the scheduling cycle.
///
/// The share owns the contiguous slice `[0, mem * tau)` of every cycle of
/// length `m_max * tau` and makes progress only there.
pub fn gpu_slice_completion(l0: f64, mem: u32, platform: &GpuPlatform, phase: f64) -> f64 {
    if mem >= platform.m_max {
        return l0;
    }
    let cycle = platform.cycle();
    let owned = mem as f64 * platform.tau;
    let eps = 1e-9 * platform.tau;
    let mut pos = phase.rem_euclid(cycle);
    let mut remaining = l0;
    let mut elapsed = 0.0;
    loop {
        if pos < owned {
            let avail = owned - pos;
            if remaining <= avail + eps {
                return elapsed + remaining;
            }
            remaining -= avail;
            elapsed += avail;
            // whole owned slices, each followed by a preempted stretch
            let full = ((remaining - eps) / owned).floor().max(0.0);
            elapsed += (cycle - owned) + full * cycle;
            remaining -= full * owned;
            pos = 0.0;
        } else {
            elapsed += cycle - pos;
            pos = 0.0;
        }
    }
}

/// One CPU execution-time draw with mean `avg` and support bounded by `max`.
///
/// Uniform on `[2 avg - max, max]`. When that interval would reach below
/// zero, a two-point draw on `{avg / 2, max}` with the same mean is used
/// instead and `fallback` is set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CpuDraw {
    pub latency: f64,
    pub fallback: bool,
}

pub fn sample_between<R: Rng + ?Sized>(avg: f64, max: f64, rng: &mut R) -> CpuDraw {
    let lo = 2.0 * avg - max;
    if lo >= 0.0 {
        let latency = if max > lo { rng.random_range(lo..=max) } else { avg };
        return CpuDraw { latency, fallback: false };
    }
    let low = avg / 2.0;
    let p_high = (avg - low) / (max - low);
    let latency = if rng.random::<f64>() < p_high { max } else { low };
    CpuDraw { latency, fallback: true }
}

pub fn sample_cpu_latency<R: Rng + ?Sized>(profile: &ModelProfile, cores: f64, batch: u32, rng: &mut R) -> Result<CpuDraw> {
    let avg = profile.cpu_avg(batch).ok_or(Error::UnknownBatch(batch))?.latency(cores);
    let max = profile.cpu_max(batch).ok_or(Error::UnknownBatch(batch))?.latency(cores);
    Ok(sample_between(avg, max, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perfmodel::gpu_max_latency;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn platform() -> GpuPlatform {
        GpuPlatform::new(24, 0.005, 1).unwrap()
    }

    #[test]
    fn two_slice_job_extremes() {
        let p = platform();
        let (m, tau) = (4u32, 0.005);
        let l0 = 2.0 * m as f64 * tau;
        let worst = gpu_slice_completion(l0, m, &p, m as f64 * tau);
        assert!((worst - 2.0 * 24.0 * tau).abs() < 1e-12, "{worst}");
        let best = gpu_slice_completion(l0, m, &p, 0.0);
        assert!((best - (24.0 + 4.0) * tau).abs() < 1e-12, "{best}");
    }

    #[test]
    fn exclusive_gpu_runs_straight_through() {
        assert_eq!(gpu_slice_completion(0.3, 24, &platform(), 0.07), 0.3);
    }

    #[test]
    fn phase_sweep_stays_under_bound() {
        let p = platform();
        for &(l0, m) in &[(0.013, 3u32), (0.05, 1), (0.2, 7), (0.0301, 10), (0.004, 23)] {
            let bound = gpu_max_latency(l0, m, &p);
            let mut worst: f64 = 0.0;
            for k in 0..(24 * 16) {
                let phase = k as f64 * p.tau / 16.0;
                let t = gpu_slice_completion(l0, m, &p, phase);
                assert!(t <= bound + 1e-12, "l0={l0} m={m} phase={phase}: {t} > {bound}");
                worst = worst.max(t);
            }
            assert!(bound - worst <= p.tau, "l0={l0} m={m}: worst {worst} vs bound {bound}");
        }
    }

    #[test]
    fn uniform_draw_matches_mean_and_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (avg, max) = (0.4, 0.55);
        let n = 200_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let d = sample_between(avg, max, &mut rng);
            assert!(!d.fallback && d.latency <= max && d.latency >= 2.0 * avg - max);
            sum += d.latency;
        }
        assert!((sum / n as f64 - avg).abs() / avg < 0.005);
    }

    #[test]
    fn degenerate_and_fallback_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert_eq!(sample_between(0.3, 0.3, &mut rng).latency, 0.3);
        let n = 200_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let d = sample_between(0.1, 0.5, &mut rng);
            assert!(d.fallback && d.latency <= 0.5);
            sum += d.latency;
        }
        assert!((sum / n as f64 - 0.1).abs() / 0.1 < 0.01);
    }
}
