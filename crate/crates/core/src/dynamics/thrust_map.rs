//! Throttle ↔ mass-normalized thrust map
//! `T = λ1 · V^λ2 · (λ3 · t² + (1 − λ3) · t)` and its calibration fit.

use std::path::Path;

use nalgebra::{Matrix3, OMatrix, Vector3, U3};
use serde::{Deserialize, Serialize};

use super::DynamicsError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThrustMapParams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub voltage_min: f64,
    pub voltage_max: f64,
}

impl Default for ThrustMapParams {
    // Roughly a 4S pack lifting a 5.8 thrust-to-weight airframe.
    fn default() -> Self {
        Self {
            lambda1: 2.6,
            lambda2: 1.0,
            lambda3: 0.35,
            voltage_min: 13.0,
            voltage_max: 16.8,
        }
    }
}

impl ThrustMapParams {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let ok = self.lambda1.is_finite()
            && self.lambda1 > 0.0
            && self.lambda2.is_finite()
            && (0.0..=1.0).contains(&self.lambda3)
            && self.voltage_min > 0.0
            && self.voltage_max >= self.voltage_min
            && self.voltage_max.is_finite();
        if ok {
            Ok(())
        } else {
            Err(DynamicsError::InvalidParams(format!("invalid thrust map {self:?}")))
        }
    }

    fn check_voltage(&self, voltage: f64) -> Result<(), DynamicsError> {
        if !(voltage >= self.voltage_min && voltage <= self.voltage_max) {
            return Err(DynamicsError::OutOfRange(format!(
                "voltage {voltage} outside [{}, {}]",
                self.voltage_min, self.voltage_max
            )));
        }
        Ok(())
    }

    fn gain(&self, voltage: f64) -> f64 {
        self.lambda1 * voltage.powf(self.lambda2)
    }

    /// Thrust produced at full throttle for the given voltage.
    pub fn max_thrust(&self, voltage: f64) -> Result<f64, DynamicsError> {
        self.check_voltage(voltage)?;
        Ok(self.gain(voltage))
    }
}

pub fn thrust_from_throttle(
    throttle: f64,
    voltage: f64,
    params: &ThrustMapParams,
) -> Result<f64, DynamicsError> {
    params.validate()?;
    params.check_voltage(voltage)?;
    if !(0.0..=1.0).contains(&throttle) {
        return Err(DynamicsError::OutOfRange(format!("throttle {throttle} outside [0, 1]")));
    }
    let l3 = params.lambda3;
    Ok(params.gain(voltage) * (l3 * throttle * throttle + (1.0 - l3) * throttle))
}

/// Inverse of [`thrust_from_throttle`]: the unique throttle in `[0, 1]`.
pub fn throttle_from_thrust(
    thrust: f64,
    voltage: f64,
    params: &ThrustMapParams,
) -> Result<f64, DynamicsError> {
    params.validate()?;
    params.check_voltage(voltage)?;
    let gain = params.gain(voltage);
    let s = thrust / gain;
    if !(0.0..=1.0).contains(&s) {
        return Err(DynamicsError::OutOfRange(format!(
            "thrust {thrust} outside achievable [0, {gain}] at {voltage} V"
        )));
    }
    if s == 0.0 {
        return Ok(0.0);
    }
    // Root of l3 t² + (1 − l3) t − s = 0 in the cancellation-free form.
    let b = 1.0 - params.lambda3;
    let t = 2.0 * s / (b + (b * b + 4.0 * params.lambda3 * s).sqrt());
    Ok(t.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSample {
    pub voltage: f64,
    pub throttle: f64,
    pub thrust: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThrustMapFit {
    pub params: ThrustMapParams,
    pub residual_rms: f64,
}

pub fn load_calibration_csv(path: impl AsRef<Path>) -> Result<Vec<CalibrationSample>, DynamicsError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in reader.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

fn model(theta: &Vector3<f64>, s: &CalibrationSample) -> f64 {
    let g = theta[2] * s.throttle * s.throttle + (1.0 - theta[2]) * s.throttle;
    theta[0] * s.voltage.powf(theta[1]) * g
}

fn jacobian_row(theta: &Vector3<f64>, s: &CalibrationSample) -> [f64; 3] {
    let vp = s.voltage.powf(theta[1]);
    let g = theta[2] * s.throttle * s.throttle + (1.0 - theta[2]) * s.throttle;
    [
        vp * g,
        theta[0] * vp * s.voltage.ln() * g,
        theta[0] * vp * (s.throttle * s.throttle - s.throttle),
    ]
}

fn sum_sq(theta: &Vector3<f64>, samples: &[CalibrationSample]) -> f64 {
    samples.iter().map(|s| (model(theta, s) - s.thrust).powi(2)).sum()
}

/// Linear least squares for (λ1, λ1·λ3) at a fixed exponent λ2; returns the
/// full parameter vector and its residual sum of squares.
fn project(lambda2: f64, samples: &[CalibrationSample]) -> Option<(Vector3<f64>, f64)> {
    let mut ata = nalgebra::Matrix2::<f64>::zeros();
    let mut atb = nalgebra::Vector2::<f64>::zeros();
    for s in samples {
        let vp = s.voltage.powf(lambda2);
        let row = nalgebra::Vector2::new(vp * s.throttle, vp * (s.throttle * s.throttle - s.throttle));
        ata += row * row.transpose();
        atb += row * s.thrust;
    }
    let sol = ata.lu().solve(&atb)?;
    if sol[0].abs() < f64::MIN_POSITIVE {
        return None;
    }
    let theta = Vector3::new(sol[0], lambda2, sol[1] / sol[0]);
    let ss = sum_sq(&theta, samples);
    ss.is_finite().then_some((theta, ss))
}

/// Nonlinear least-squares calibration of the thrust map.
///
/// The exponent is located by a grid scan plus golden-section search over
/// the linearly projected residual, then all three parameters are polished
/// with damped Gauss-Newton steps, keeping λ3 inside `[0, 1]`.
pub fn fit_thrust_map(samples: &[CalibrationSample]) -> Result<ThrustMapFit, DynamicsError> {
    if samples.len() < 3 {
        return Err(DynamicsError::Unidentifiable(format!(
            "need at least 3 samples, got {}",
            samples.len()
        )));
    }
    for s in samples {
        let ok = s.voltage.is_finite()
            && s.voltage > 0.0
            && (0.0..=1.0).contains(&s.throttle)
            && s.thrust.is_finite();
        if !ok {
            return Err(DynamicsError::InvalidParams(format!("bad calibration sample {s:?}")));
        }
    }
    let v_min = samples.iter().map(|s| s.voltage).fold(f64::INFINITY, f64::min);
    let v_max = samples.iter().map(|s| s.voltage).fold(f64::NEG_INFINITY, f64::max);
    if v_max - v_min <= 1e-9 * v_max {
        return Err(DynamicsError::Unidentifiable(
            "all samples share one voltage; the voltage exponent cannot be identified".into(),
        ));
    }

    // Coarse scan of the exponent.
    let mut best: Option<(f64, f64)> = None;
    let mut l2 = -4.0;
    while l2 <= 4.0 + 1e-12 {
        if let Some((_, ss)) = project(l2, samples) {
            if best.is_none_or(|(_, b)| ss < b) {
                best = Some((l2, ss));
            }
        }
        l2 += 0.05;
    }
    let (center, _) = best.ok_or_else(|| DynamicsError::Unidentifiable("rank-deficient calibration data".into()))?;

    // Golden-section refinement on the projected objective.
    let f = |x: f64| project(x, samples).map(|(_, ss)| ss).unwrap_or(f64::INFINITY);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (center - 0.05, center + 0.05);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() < 1e-13 {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    let (mut theta, mut ss) = project(0.5 * (a + b), samples)
        .ok_or_else(|| DynamicsError::Unidentifiable("rank-deficient calibration data".into()))?;
    theta[2] = theta[2].clamp(0.0, 1.0);
    ss = ss.min(sum_sq(&theta, samples));

    // Levenberg-Marquardt polish.
    let mut mu = 1e-6;
    for _ in 0..100 {
        let mut jtj = Matrix3::<f64>::zeros();
        let mut jtr = Vector3::<f64>::zeros();
        for s in samples {
            let row = Vector3::from(jacobian_row(&theta, s));
            let r = s.thrust - model(&theta, s);
            jtj += row * row.transpose();
            jtr += row * r;
        }
        let mut improved = false;
        for _ in 0..20 {
            let damped = jtj + Matrix3::from_diagonal(&jtj.diagonal()) * mu;
            let Some(step) = damped.lu().solve(&jtr) else {
                mu *= 10.0;
                continue;
            };
            let mut cand = theta + step;
            cand[2] = cand[2].clamp(0.0, 1.0);
            let cand_ss = sum_sq(&cand, samples);
            if cand_ss <= ss {
                let converged = (theta - cand).norm() <= 1e-15 * (1.0 + theta.norm());
                theta = cand;
                ss = cand_ss;
                mu = (mu * 0.1).max(1e-12);
                improved = !converged;
                break;
            }
            mu *= 10.0;
        }
        if !improved {
            break;
        }
    }

    // Identifiability at the solution.
    let j = OMatrix::<f64, nalgebra::Dyn, U3>::from_fn(samples.len(), |r, c| jacobian_row(&theta, &samples[r])[c]);
    let sv = j.svd(false, false).singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    if !(smax > 0.0) || smin / smax < 1e-10 {
        return Err(DynamicsError::Unidentifiable(format!(
            "rank-deficient calibration data (singular values {sv:?})"
        )));
    }

    let params = ThrustMapParams {
        lambda1: theta[0],
        lambda2: theta[1],
        lambda3: theta[2],
        voltage_min: v_min,
        voltage_max: v_max,
    };
    Ok(ThrustMapFit {
        params,
        residual_rms: (ss / samples.len() as f64).sqrt(),
    })
}
