//! Reference implementations used only by tests.
#![allow(dead_code)]

/// Longitudinal body advanced in fixed steps with exact polynomial updates.
#[derive(Debug, Clone, Copy)]
struct Body {
    x: f64,
    v: f64,
    a: f64,
    jerk: f64,
    stopped: bool,
}

impl Body {
    fn velocity(&self, tau: f64) -> f64 {
        if self.stopped {
            0.0
        } else {
            self.v + self.a * tau + self.jerk * tau * tau / 2.0
        }
    }

    fn position(&self, tau: f64) -> f64 {
        if self.stopped {
            self.x
        } else {
            self.x + self.v * tau + self.a * tau * tau / 2.0 + self.jerk * tau.powi(3) / 6.0
        }
    }

    /// First time in `(0, h]` at which the body comes to rest.
    fn stop_within(&self, h: f64) -> Option<f64> {
        if self.stopped {
            return None;
        }
        // bisection on the sign of the velocity, refined to machine precision
        let end = self.velocity(h);
        if end > 0.0 {
            // a quadratic velocity may dip below zero inside the step
            let tm = if self.jerk != 0.0 { -self.a / self.jerk } else { -1.0 };
            if !(tm > 0.0 && tm < h && self.velocity(tm) < 0.0) {
                return None;
            }
            return Some(bisect(|t| self.velocity(t), 0.0, tm));
        }
        Some(bisect(|t| self.velocity(t), 0.0, h))
    }

    fn advance(&mut self, tau: f64) {
        if self.stopped {
            return;
        }
        let x = self.position(tau);
        let v = self.velocity(tau);
        self.x = x;
        self.v = v.max(0.0);
        self.a += self.jerk * tau;
    }

    fn stop(&mut self) {
        self.stopped = true;
        self.v = 0.0;
        self.a = 0.0;
        self.jerk = 0.0;
    }
}

/// Root of a decreasing function sign change between `lo` (positive) and `hi`.
fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Whether an ego that ramps its deceleration at `jerk` up to `level` and
/// holds it stays behind a lead starting `gap` ahead with constant
/// acceleration `a_lead` (stationary once stopped). Steps of `dt`, with
/// every step split at ramp end and stop events and checked at its interior
/// closest approach.
pub fn avoids(gap: f64, v_ego: f64, v_lead: f64, a_lead: f64, level: f64, jerk: f64, dt: f64) -> bool {
    let mut ego = Body {
        x: 0.0,
        v: v_ego,
        a: 0.0,
        jerk: if level > 0.0 { -jerk } else { 0.0 },
        stopped: v_ego <= 0.0,
    };
    let mut lead = Body {
        x: gap,
        v: v_lead,
        a: a_lead,
        jerk: 0.0,
        stopped: v_lead <= 0.0 && a_lead <= 0.0,
    };
    let ramp_end = if level > 0.0 { level / jerk } else { 0.0 };
    let mut t = 0.0;
    loop {
        if lead.x - ego.x <= 0.0 {
            return false;
        }
        // settled: the ego has stopped, or it no longer closes and never will again
        let rel_v = ego.velocity(0.0) - lead.velocity(0.0);
        let ramping = ego.jerk != 0.0;
        let lead_final_a = if lead.stopped { 0.0 } else { lead.a };
        if ego.stopped
            || (!ramping && rel_v <= 0.0 && ego.a <= lead_final_a && (lead.stopped || ego.a <= 0.0))
        {
            return true;
        }
        let mut h = dt;
        if ramping && t + h > ramp_end {
            h = (ramp_end - t).max(0.0);
        }
        let ego_stop = ego.stop_within(h);
        let lead_stop = lead.stop_within(h);
        if let Some(s) = ego_stop {
            h = h.min(s);
        }
        if let Some(s) = lead_stop {
            h = h.min(s);
        }
        // closest approach inside the step: relative velocity roots
        let dj = ego.jerk - lead.jerk;
        let da = ego.a - lead.a;
        let dv = rel_v;
        for r in quadratic_roots(dj / 2.0, da, dv) {
            if r > 0.0 && r < h && lead.position(r) - ego.position(r) <= 0.0 {
                return false;
            }
        }
        ego.advance(h);
        lead.advance(h);
        t += h;
        if ego_stop.is_some_and(|s| s <= h) || (!ego.stopped && ego.v <= 0.0 && ego.a <= 0.0) {
            ego.stop();
        }
        if lead_stop.is_some_and(|s| s <= h) || (!lead.stopped && lead.v <= 0.0 && lead.a <= 0.0) {
            lead.stop();
        }
        if ramping && t >= ramp_end - 1e-15 {
            ego.a = -level;
            ego.jerk = 0.0;
        }
        if t > 1e5 {
            return true;
        }
    }
}

fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    if a.abs() < 1e-14 {
        if b.abs() < 1e-14 {
            return vec![];
        }
        return vec![-c / b];
    }
    let d = b * b - 4.0 * a * c;
    if d < 0.0 {
        return vec![];
    }
    let s = d.sqrt();
    vec![(-b - s) / (2.0 * a), (-b + s) / (2.0 * a)]
}

/// BTN by bisection on the deceleration level against [`avoids`], with the
/// same search cap (50 × max) as the shipped implementation.
pub fn btn(gap: f64, v_ego: f64, v_lead: f64, a_lead: f64, max_decel: f64, jerk: f64) -> f64 {
    let dt = 0.2;
    let ok = |level: f64| avoids(gap, v_ego, v_lead, a_lead, level, jerk, dt);
    if ok(0.0) {
        return 0.0;
    }
    let cap = 50.0 * max_decel;
    let (mut lo, mut hi) = (0.0, max_decel);
    while !ok(hi) {
        if hi >= cap {
            return f64::INFINITY;
        }
        lo = hi;
        hi = (2.0 * hi).min(cap);
    }
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi / max_decel
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, descending.
pub fn symmetric_eigenvalues(mut m: Vec<Vec<f64>>) -> Vec<f64> {
    let n = m.len();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        if off < 1e-22 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[i][i]).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// Squared singular values of the standardized rows, from the Gram matrix.
pub fn standardized_spectrum(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len() as f64;
    let p = rows[0].len();
    let mean: Vec<f64> = (0..p).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let sd: Vec<f64> = (0..p)
        .map(|j| {
            let s = (rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt();
            if s <= 1e-12 {
                1.0
            } else {
                s
            }
        })
        .collect();
    let z: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| (0..p).map(|j| (r[j] - mean[j]) / sd[j]).collect())
        .collect();
    let gram: Vec<Vec<f64>> = (0..p)
        .map(|i| (0..p).map(|j| z.iter().map(|r| r[i] * r[j]).sum()).collect())
        .collect();
    symmetric_eigenvalues(gram)
}

/// Share of the spectrum in the first `d` entries.
pub fn energy(spectrum: &[f64], d: usize) -> f64 {
    let total: f64 = spectrum.iter().map(|x| x.max(0.0)).sum();
    spectrum.iter().take(d).map(|x| x.max(0.0)).sum::<f64>() / total
}
