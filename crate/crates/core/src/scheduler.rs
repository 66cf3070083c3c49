//! Rectified-flow noise schedule, SNR, expert switching and the Euler update.
//!
//! The forward process is `z_t = (1 - t) x0 + t eps`, so `alpha_t = 1 - t` and
//! `sigma_t = t`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::VideoLatent;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub t: f64,
    pub alpha: f64,
    pub sigma: f64,
}

impl Step {
    pub fn at(t: f64) -> Self {
        Self {
            t,
            alpha: 1.0 - t,
            sigma: t,
        }
    }
}

/// Descending timesteps `t_1 > ... > t_N`, terminal time 0.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    steps: Vec<Step>,
}

impl NoiseSchedule {
    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// `(t, t_next)` pairs; the last pair ends at 0.
    pub fn transitions(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.steps.iter().enumerate().map(|(i, s)| {
            let next = self.steps.get(i + 1).map_or(0.0, |n| n.t);
            (s.t, next)
        })
    }
}

/// Linear grid `t_i = 1 - (i-1)/N`, `i = 1..=N`.
pub fn make_schedule(steps: usize) -> Result<NoiseSchedule> {
    if steps == 0 {
        return Err(Error::argument("schedule needs at least one step"));
    }
    let n = steps as f64;
    Ok(NoiseSchedule {
        steps: (0..steps).map(|i| Step::at(1.0 - i as f64 / n)).collect(),
    })
}

/// `alpha_t^2 / sigma_t^2` on the linear schedule.
pub fn snr(t: f64) -> Result<f64> {
    let s = Step::at(t);
    if s.sigma <= 0.0 {
        return Err(Error::Domain(format!(
            "SNR undefined at t={t} (sigma_t = 0)"
        )));
    }
    Ok(s.alpha * s.alpha / (s.sigma * s.sigma))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExpertPhase {
    HighNoise,
    LowNoise,
}

impl ExpertPhase {
    pub fn label(&self) -> &'static str {
        match self {
            ExpertPhase::HighNoise => "high",
            ExpertPhase::LowNoise => "low",
        }
    }
}

/// High-noise expert strictly above `switch_t`; the boundary belongs to the low-noise expert.
pub fn expert_for(t: f64, switch_t: f64) -> ExpertPhase {
    if t > switch_t {
        ExpertPhase::HighNoise
    } else {
        ExpertPhase::LowNoise
    }
}

/// One Euler step from `t` to `t_next` with velocity `(z_t - x0) / t`.
///
/// Written as `x0 + (t_next / t)(z_t - x0)`, which returns `x0_pred` exactly
/// when `t_next = 0` and `z_t` exactly when the velocity is zero.
pub fn euler_step(
    z_t: &VideoLatent,
    x0_pred: &VideoLatent,
    t: f64,
    t_next: f64,
) -> Result<VideoLatent> {
    if t <= 0.0 {
        return Err(Error::argument(format!("euler step needs t > 0, got {t}")));
    }
    if !(0.0..t).contains(&t_next) {
        return Err(Error::argument(format!(
            "euler step needs 0 <= t_next < t, got t={t} t_next={t_next}"
        )));
    }
    z_t.ensure_same_dims(x0_pred)?;
    let ratio = (t_next / t) as f32;
    let data = z_t
        .data()
        .iter()
        .zip(x0_pred.data())
        .map(|(&z, &x0)| x0 + ratio * (z - x0))
        .collect();
    VideoLatent::new(z_t.dims(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eight_step_grid() {
        let s = make_schedule(8).unwrap();
        let ts: Vec<f64> = s.steps().iter().map(|s| s.t).collect();
        assert_eq!(ts, vec![1.0, 0.875, 0.75, 0.625, 0.5, 0.375, 0.25, 0.125]);
        assert_eq!(s.transitions().last(), Some((0.125, 0.0)));
        let third = s.steps()[2];
        assert_eq!((third.alpha, third.sigma), (0.25, 0.75));
    }

    #[test]
    fn single_step_and_zero() {
        let s = make_schedule(1).unwrap();
        assert_eq!(s.transitions().collect::<Vec<_>>(), vec![(1.0, 0.0)]);
        assert!(make_schedule(0).is_err());
    }

    #[test]
    fn snr_values() {
        assert_eq!(snr(0.5).unwrap(), 1.0);
        assert!((snr(0.75).unwrap() - 1.0 / 9.0).abs() < 1e-15);
        assert!(matches!(snr(0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn snr_increases_along_grid() {
        let s = make_schedule(16).unwrap();
        let values: Vec<f64> = s.steps().iter().map(|st| snr(st.t).unwrap()).collect();
        assert!(values.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn expert_dispatch() {
        assert_eq!(expert_for(1.0, 0.9), ExpertPhase::HighNoise);
        assert_eq!(expert_for(0.875, 0.9), ExpertPhase::LowNoise);
        assert_eq!(expert_for(0.9, 0.9), ExpertPhase::LowNoise);
    }

    #[test]
    fn single_transition_over_schedule() {
        for n in 1..20 {
            for &sw in &[0.1, 0.5, 0.9, 0.95] {
                let phases: Vec<_> = make_schedule(n)
                    .unwrap()
                    .steps()
                    .iter()
                    .map(|s| expert_for(s.t, sw))
                    .collect();
                let switches = phases.windows(2).filter(|w| w[0] != w[1]).count();
                assert!(switches <= 1);
                assert_eq!(phases[0], ExpertPhase::HighNoise);
                if switches == 1 {
                    let first_low = phases
                        .iter()
                        .position(|p| *p == ExpertPhase::LowNoise)
                        .unwrap();
                    assert!(phases[first_low..]
                        .iter()
                        .all(|p| *p == ExpertPhase::LowNoise));
                }
            }
        }
    }

    fn scalar(v: f32) -> VideoLatent {
        VideoLatent::new([1, 1, 1, 1], vec![v]).unwrap()
    }

    #[test]
    fn euler_identities() {
        let z = VideoLatent::new([1, 2, 1, 2], vec![0.3, -1.7, 2.2, 9.1]).unwrap();
        let x0 = VideoLatent::new([1, 2, 1, 2], vec![0.1, 0.2, -0.4, 1e-3]).unwrap();
        assert_eq!(euler_step(&z, &x0, 0.375, 0.0).unwrap(), x0);
        assert_eq!(euler_step(&z, &z, 0.9, 0.3).unwrap(), z);
        assert_eq!(
            euler_step(&scalar(1.0), &scalar(0.0), 1.0, 0.5).unwrap(),
            scalar(0.5)
        );
    }

    #[test]
    fn euler_errors() {
        let z = scalar(1.0);
        assert!(euler_step(&z, &z, 0.0, 0.0).is_err());
        assert!(euler_step(&z, &z, 0.5, 0.5).is_err());
        let other = VideoLatent::zeros([1, 2, 1, 1]).unwrap();
        assert!(matches!(
            euler_step(&z, &other, 1.0, 0.5),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn one_step_recovers_true_sample() {
        // z_1 is pure noise; an oracle denoiser that returns the true x0 lands on it exactly.
        let x0 = VideoLatent::new([1, 1, 2, 2], vec![0.25, -0.5, 1.0, 0.0]).unwrap();
        let noise = VideoLatent::new([1, 1, 2, 2], vec![1.3, -0.2, 0.7, -2.0]).unwrap();
        assert_eq!(euler_step(&noise, &x0, 1.0, 0.0).unwrap(), x0);
    }
}
