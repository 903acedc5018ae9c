//! Piecewise constant-jerk longitudinal motion with a standstill clamp, and
//! the exact maximum approach between a follower and a leader.
//!
//! Once a vehicle reaches zero speed it stays stationary. The maximum of the
//! follower-minus-leader displacement is found from the breakpoints of both
//! profiles and the roots of the (at most quadratic) relative speed inside
//! each piece, so no time stepping is involved.

const EPS: f64 = 1e-12;

/// One phase of a motion profile: starting acceleration and constant jerk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phase {
    /// Phase length, s. The last phase may be infinite.
    pub duration: f64,
    pub accel: f64,
    pub jerk: f64,
}

impl Phase {
    pub fn hold(duration: f64, accel: f64) -> Self {
        Phase {
            duration,
            accel,
            jerk: 0.0,
        }
    }

    pub fn ramp(duration: f64, accel: f64, jerk: f64) -> Self {
        Phase {
            duration,
            accel,
            jerk,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Motion {
    pub v0: f64,
    /// Consecutive phases; an implicit infinite zero-acceleration phase follows the last one.
    pub phases: Vec<Phase>,
}

impl Motion {
    pub fn constant_accel(v0: f64, accel: f64) -> Self {
        Motion {
            v0,
            phases: vec![Phase::hold(f64::INFINITY, accel)],
        }
    }

    fn segments(&self) -> Vec<Segment> {
        let mut out = Vec::new();
        let mut t = 0.0;
        let mut s = 0.0;
        let mut v = self.v0.max(0.0);
        let implicit = Phase::hold(f64::INFINITY, 0.0);
        for phase in self.phases.iter().chain(std::iter::once(&implicit)) {
            if phase.duration <= 0.0 {
                continue;
            }
            let seg = Segment {
                t0: t,
                t1: t + phase.duration,
                s0: s,
                v0: v,
                a0: phase.accel,
                jerk: phase.jerk,
            };
            if let Some(tau) = seg.stop_time() {
                out.push(Segment { t1: t + tau, ..seg });
                let s_stop = seg.position(tau);
                out.push(Segment::stopped(t + tau, s_stop));
                return out;
            }
            out.push(seg);
            if phase.duration.is_infinite() {
                return out;
            }
            s = seg.position(phase.duration);
            v = seg.velocity(phase.duration).max(0.0);
            t += phase.duration;
        }
        out
    }

    /// Displacement and speed at time `t`.
    pub fn state_at(&self, t: f64) -> (f64, f64) {
        let segs = self.segments();
        let seg = segs
            .iter()
            .find(|g| t <= g.t1)
            .unwrap_or_else(|| segs.last().expect("at least one segment"));
        let tau = t - seg.t0;
        (seg.position(tau), seg.velocity(tau).max(0.0))
    }
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    t0: f64,
    t1: f64,
    s0: f64,
    v0: f64,
    a0: f64,
    jerk: f64,
}

impl Segment {
    fn stopped(t0: f64, s0: f64) -> Self {
        Segment {
            t0,
            t1: f64::INFINITY,
            s0,
            v0: 0.0,
            a0: 0.0,
            jerk: 0.0,
        }
    }

    fn position(&self, tau: f64) -> f64 {
        self.s0 + self.v0 * tau + self.a0 * tau * tau / 2.0 + self.jerk * tau * tau * tau / 6.0
    }

    fn velocity(&self, tau: f64) -> f64 {
        self.v0 + self.a0 * tau + self.jerk * tau * tau / 2.0
    }

    /// First time within the segment at which speed reaches zero while decreasing.
    fn stop_time(&self) -> Option<f64> {
        let len = self.t1 - self.t0;
        if self.v0 <= EPS {
            // Already stationary: stays so unless the profile pushes forward.
            let pushes = self.a0 > 0.0 || (self.a0 == 0.0 && self.jerk > 0.0);
            return if pushes { None } else { Some(0.0) };
        }
        let roots = quadratic_roots(self.jerk / 2.0, self.a0, self.v0);
        roots
            .into_iter()
            .filter(|&r| r > 0.0 && r <= len)
            .filter(|&r| self.a0 + self.jerk * r <= 0.0)
            .reduce(f64::min)
    }
}

/// Real roots of `a x² + b x + c`, degenerating gracefully to linear.
fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    if a.abs() < EPS {
        if b.abs() < EPS {
            return Vec::new();
        }
        return vec![-c / b];
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Vec::new();
    }
    let sq = disc.sqrt();
    // numerically stable pair
    let q = -0.5 * (b + b.signum() * sq);
    let mut r = Vec::with_capacity(2);
    if q.abs() > EPS {
        r.push(q / a);
        r.push(c / q);
    } else {
        r.push(-b / (2.0 * a));
    }
    r
}

/// Supremum over t ≥ 0 of (follower displacement − leader displacement).
/// Returns infinity when the follower keeps closing forever.
pub fn max_approach(follower: &Motion, leader: &Motion) -> f64 {
    let fs = follower.segments();
    let ls = leader.segments();
    let mut cuts: Vec<f64> = fs
        .iter()
        .chain(&ls)
        .flat_map(|g| [g.t0, g.t1])
        .filter(|t| t.is_finite())
        .collect();
    cuts.push(0.0);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-15);

    let seg_at = |segs: &[Segment], t: f64| -> Segment {
        *segs
            .iter()
            .find(|g| t < g.t1 - 1e-15)
            .unwrap_or_else(|| segs.last().unwrap())
    };
    let mut best = 0.0f64;
    for (k, &t0) in cuts.iter().enumerate() {
        let t1 = cuts.get(k + 1).copied().unwrap_or(f64::INFINITY);
        let f = seg_at(&fs, t0);
        let l = seg_at(&ls, t0);
        let (tf, tl) = (t0 - f.t0, t0 - l.t0);
        // relative state at the start of this piece
        let ds = f.position(tf) - l.position(tl);
        let dv = f.velocity(tf).max(0.0) - l.velocity(tl).max(0.0);
        let da = (f.a0 + f.jerk * tf) - (l.a0 + l.jerk * tl);
        let dj = f.jerk - l.jerk;
        let disp = |tau: f64| ds + dv * tau + da * tau * tau / 2.0 + dj * tau * tau * tau / 6.0;
        best = best.max(ds);
        if t1.is_infinite() {
            // Remaining relative speed is polynomial; check its sign at infinity.
            let lead = if dj.abs() > EPS {
                dj
            } else if da.abs() > EPS {
                da
            } else {
                dv
            };
            if lead > EPS {
                return f64::INFINITY;
            }
        } else {
            best = best.max(disp(t1 - t0));
        }
        let len = t1 - t0;
        for r in quadratic_roots(dj / 2.0, da, dv) {
            if r > 0.0 && r < len {
                best = best.max(disp(r));
            }
        }
    }
    best
}
