use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use super::kernel::JumpKernel;
use crate::error::{invalid, Error, Result};

/// Piecewise-constant càdlàg path on `[0, horizon]`, stored as its
/// nontrivial jumps.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticePath {
    start: i64,
    horizon: f64,
    times: Vec<f64>,
    positions: Vec<i64>,
}

impl LatticePath {
    pub fn constant(start: i64, horizon: f64) -> Self {
        Self {
            start,
            horizon,
            times: Vec::new(),
            positions: Vec::new(),
        }
    }

    /// Build from explicit `(time, new_position)` jumps, checking the
    /// ordering and nontriviality invariants.
    pub fn from_jumps(start: i64, horizon: f64, jumps: impl IntoIterator<Item = (f64, i64)>) -> Result<Self> {
        if !(horizon >= 0.0 && horizon.is_finite()) {
            return Err(invalid(format!("horizon {horizon} must be finite and ≥ 0")));
        }
        let mut path = Self::constant(start, horizon);
        let mut last_time = 0.0;
        for (time, pos) in jumps {
            if !(time > last_time && time <= horizon) {
                return Err(invalid(format!(
                    "jump time {time} not in ({last_time}, {horizon}]"
                )));
            }
            if pos == path.end() {
                return Err(invalid(format!("trivial jump to {pos} at time {time}")));
            }
            path.times.push(time);
            path.positions.push(pos);
            last_time = time;
        }
        Ok(path)
    }

    /// Nearest-neighbour zig-zag between `±amplitude`: one unit step every
    /// `step_interval`, starting upward from 0.
    pub fn zigzag(amplitude: i64, step_interval: f64, horizon: f64) -> Result<Self> {
        if amplitude < 0 || !(step_interval > 0.0) {
            return Err(invalid("zig-zag needs amplitude ≥ 0 and positive step interval"));
        }
        let mut path = Self::constant(0, horizon);
        if amplitude == 0 {
            return Ok(path);
        }
        let mut pos = 0i64;
        let mut dir = 1i64;
        let mut k = 1u64;
        loop {
            let time = k as f64 * step_interval;
            if time > horizon {
                break;
            }
            if (pos + dir).abs() > amplitude {
                dir = -dir;
            }
            pos += dir;
            path.times.push(time);
            path.positions.push(pos);
            k += 1;
        }
        Ok(path)
    }

    /// Append a jump generated in time order. Equal times replace the
    /// previous jump (generation order wins); moves back to the prior
    /// position are dropped so every stored jump stays nontrivial.
    pub(crate) fn push_jump(&mut self, time: f64, pos: i64) {
        if let Some(&last) = self.times.last() {
            if time <= last {
                self.times.pop();
                self.positions.pop();
                if pos != self.end() {
                    self.times.push(last);
                    self.positions.push(pos);
                }
                return;
            }
        }
        if pos != self.end() {
            self.times.push(time);
            self.positions.push(pos);
        }
    }

    pub fn start(&self) -> i64 {
        self.start
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn num_jumps(&self) -> usize {
        self.times.len()
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.times
    }

    pub fn jump_positions(&self) -> &[i64] {
        &self.positions
    }

    pub fn jumps(&self) -> impl Iterator<Item = (f64, i64)> + '_ {
        self.times.iter().copied().zip(self.positions.iter().copied())
    }

    /// Position at the end of the horizon.
    pub fn end(&self) -> i64 {
        self.positions.last().copied().unwrap_or(self.start)
    }

    /// `X_s`, right-continuous.
    pub fn position_at(&self, s: f64) -> i64 {
        let k = self.times.partition_point(|&t| t <= s);
        if k == 0 {
            self.start
        } else {
            self.positions[k - 1]
        }
    }

    /// Constant pieces `(from, to, position)` covering `[0, horizon]`.
    pub fn segments(&self) -> Segments<'_> {
        Segments { path: self, next: 0 }
    }

    /// Every visited position, including the start.
    pub fn visited(&self) -> impl Iterator<Item = i64> + '_ {
        std::iter::once(self.start).chain(self.positions.iter().copied())
    }

    pub fn min_max(&self) -> (i64, i64) {
        self.visited()
            .fold((self.start, self.start), |(lo, hi), x| (lo.min(x), hi.max(x)))
    }

    /// Restriction to `[0, horizon]` for `horizon ≤ self.horizon()`.
    pub fn truncate(&self, horizon: f64) -> Self {
        let k = self.times.partition_point(|&t| t <= horizon);
        Self {
            start: self.start,
            horizon: horizon.min(self.horizon),
            times: self.times[..k].to_vec(),
            positions: self.positions[..k].to_vec(),
        }
    }

    /// CSV with columns `time,position`: the start at time 0, each jump, and
    /// the final position at the horizon.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time", "position"])?;
        w.serialize((0.0, self.start))?;
        for (t, x) in self.jumps() {
            w.serialize((t, x))?;
        }
        w.serialize((self.horizon, self.end()))?;
        w.flush().map_err(Error::Io)?;
        Ok(())
    }
}

pub struct Segments<'a> {
    path: &'a LatticePath,
    next: usize,
}

impl Iterator for Segments<'_> {
    type Item = (f64, f64, i64);

    fn next(&mut self) -> Option<Self::Item> {
        let p = self.path;
        let n = p.times.len();
        if self.next > n {
            return None;
        }
        let i = self.next;
        self.next += 1;
        let from = if i == 0 { 0.0 } else { p.times[i - 1] };
        let to = if i == n { p.horizon } else { p.times[i] };
        let pos = if i == 0 { p.start } else { p.positions[i - 1] };
        Some((from, to, pos))
    }
}

pub(crate) fn check_rate(rate: f64) -> Result<()> {
    if rate > 0.0 && rate.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("jump rate {rate} must be positive and finite")))
    }
}

pub(crate) fn check_horizon(horizon: f64) -> Result<()> {
    if horizon >= 0.0 && horizon.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("horizon {horizon} must be finite and ≥ 0")))
    }
}

/// Streaming jump sequence of a rate-`rate` walk: `(time, displacement)`
/// pairs with times `< horizon`, generated as cumulative exponential gaps.
pub struct JumpStream<'a, R: ?Sized> {
    kernel: &'a JumpKernel,
    mean_gap: f64,
    horizon: f64,
    time: f64,
    rng: &'a mut R,
}

impl<'a, R: Rng + ?Sized> JumpStream<'a, R> {
    pub fn new(kernel: &'a JumpKernel, rate: f64, horizon: f64, rng: &'a mut R) -> Self {
        Self {
            kernel,
            mean_gap: 1.0 / rate,
            horizon,
            time: 0.0,
            rng,
        }
    }
}

impl<R: Rng + ?Sized> Iterator for JumpStream<'_, R> {
    type Item = (f64, i64);

    #[inline]
    fn next(&mut self) -> Option<(f64, i64)> {
        let gap: f64 = Exp1.sample(self.rng);
        self.time += gap * self.mean_gap;
        if self.time < self.horizon {
            Some((self.time, self.kernel.sample(self.rng)))
        } else {
            self.time = f64::INFINITY;
            None
        }
    }
}

/// Sample a rate-`rate` continuous-time walk with jump kernel `kernel`.
pub fn sample_path<R: Rng + ?Sized>(
    kernel: &JumpKernel,
    rate: f64,
    start: i64,
    horizon: f64,
    rng: &mut R,
) -> Result<LatticePath> {
    check_rate(rate)?;
    check_horizon(horizon)?;
    let mut path = LatticePath::constant(start, horizon);
    let mut pos = start;
    for (t, d) in JumpStream::new(kernel, rate, horizon, rng) {
        pos += d;
        path.push_jump(t, pos);
    }
    Ok(path)
}

/// Path of a walk that may not move at all (`rate == 0` allowed).
pub fn sample_path_or_constant<R: Rng + ?Sized>(
    kernel: &JumpKernel,
    rate: f64,
    start: i64,
    horizon: f64,
    rng: &mut R,
) -> Result<LatticePath> {
    if rate == 0.0 {
        check_horizon(horizon)?;
        Ok(LatticePath::constant(start, horizon))
    } else {
        sample_path(kernel, rate, start, horizon, rng)
    }
}

/// One-step law of the discrete-time approximation: stay with probability
/// `1 − κq`, move by `x` with probability `κq·p(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SteppedKernel {
    pub step: f64,
    pub stay: f64,
    pub moves: Vec<(i64, f64)>,
    base: JumpKernel,
    move_probability: f64,
}

impl SteppedKernel {
    pub fn probability(&self, displacement: i64) -> f64 {
        if displacement == 0 {
            self.stay
        } else {
            self.moves
                .iter()
                .find(|m| m.0 == displacement)
                .map_or(0.0, |m| m.1)
        }
    }

    /// Sample the rescaled chain `X^q(⌊s/q⌋)` on `[0, horizon]`: one step
    /// every `q` time units, recording only nontrivial steps. Holding
    /// times are drawn as `⌈E / −ln(1 − κq)⌉` from a unit exponential `E`,
    /// which couples chains with different `q` through the same draws.
    pub fn sample_path<R: Rng + ?Sized>(&self, start: i64, horizon: f64, rng: &mut R) -> Result<LatticePath> {
        check_horizon(horizon)?;
        let steps = (horizon / self.step).floor() as u64;
        let scale = -(-self.move_probability).ln_1p();
        let mut path = LatticePath::constant(start, horizon);
        let mut pos = start;
        let mut k: u64 = 0;
        loop {
            let e: f64 = Exp1.sample(rng);
            let hold = (e / scale).ceil().max(1.0);
            if k as f64 + hold > steps as f64 {
                break;
            }
            k += hold as u64;
            pos += self.base.sample(rng);
            path.push_jump(k as f64 * self.step, pos);
        }
        Ok(path)
    }
}

/// Discrete-time approximation of a rate-`κ` walk with time step `q`.
pub fn discretize(kernel: &JumpKernel, rate: f64, q: f64) -> Result<SteppedKernel> {
    check_rate(rate)?;
    if !(q > 0.0 && q * rate < 1.0) {
        return Err(invalid(format!("time step {q} outside (0, 1/κ) for κ = {rate}")));
    }
    let move_probability = rate * q;
    Ok(SteppedKernel {
        step: q,
        stay: 1.0 - move_probability,
        moves: kernel
            .offsets()
            .iter()
            .map(|&(d, p)| (d, move_probability * p))
            .collect(),
        base: kernel.clone(),
        move_probability,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn zero_horizon_has_no_jumps() {
        let mut rng = RngStream::new(1, 1).rng();
        let p = sample_path(&JumpKernel::ssrw(), 1.0, 4, 0.0, &mut rng).unwrap();
        assert_eq!(p.num_jumps(), 0);
        assert_eq!(p.position_at(0.0), 4);
    }

    #[test]
    fn nonpositive_rate_is_rejected() {
        let mut rng = RngStream::new(1, 1).rng();
        assert!(sample_path(&JumpKernel::ssrw(), 0.0, 0, 1.0, &mut rng).is_err());
        assert!(sample_path(&JumpKernel::ssrw(), -1.0, 0, 1.0, &mut rng).is_err());
    }

    #[test]
    fn deterministic_given_stream() {
        let s = RngStream::new(42, 9);
        let a = sample_path(&JumpKernel::two_step(), 1.3, 0, 50.0, &mut s.rng()).unwrap();
        let b = sample_path(&JumpKernel::two_step(), 1.3, 0, 50.0, &mut s.rng()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn evaluation_is_right_continuous() {
        let p = LatticePath::from_jumps(0, 4.0, [(1.0, 1), (3.0, 0)]).unwrap();
        assert_eq!(p.position_at(0.999), 0);
        assert_eq!(p.position_at(1.0), 1);
        assert_eq!(p.position_at(3.0), 0);
        assert_eq!(p.position_at(4.0), 0);
        let segs: Vec<_> = p.segments().collect();
        assert_eq!(segs, vec![(0.0, 1.0, 0), (1.0, 3.0, 1), (3.0, 4.0, 0)]);
    }

    #[test]
    fn from_jumps_enforces_invariants() {
        assert!(LatticePath::from_jumps(0, 2.0, [(1.0, 0)]).is_err());
        assert!(LatticePath::from_jumps(0, 2.0, [(1.0, 1), (1.0, 2)]).is_err());
        assert!(LatticePath::from_jumps(0, 2.0, [(3.0, 1)]).is_err());
    }

    #[test]
    fn tied_jump_times_apply_in_generation_order() {
        let mut p = LatticePath::constant(0, 5.0);
        p.push_jump(1.0, 1);
        p.push_jump(1.0, 2);
        assert_eq!(p.jumps().collect::<Vec<_>>(), vec![(1.0, 2)]);
        p.push_jump(2.0, 3);
        p.push_jump(2.0, 2);
        assert_eq!(p.jumps().collect::<Vec<_>>(), vec![(1.0, 2)]);
    }

    #[test]
    fn zigzag_turns_at_amplitude() {
        let p = LatticePath::zigzag(2, 1.0, 9.0).unwrap();
        let pos: Vec<i64> = p.jump_positions().to_vec();
        assert_eq!(pos, vec![1, 2, 1, 0, -1, -2, -1, 0, 1]);
    }

    #[test]
    fn discretize_formula() {
        let k = discretize(&JumpKernel::ssrw(), 1.0, 0.5).unwrap();
        assert_eq!(k.stay, 0.5);
        assert_eq!(k.probability(1), 0.25);
        assert_eq!(k.probability(-1), 0.25);

        let wide = JumpKernel::new([(2, 0.5), (-2, 0.5)]).unwrap();
        let k = discretize(&wide, 2.0, 0.1).unwrap();
        assert!((k.stay - 0.8).abs() < 1e-15);
        assert!((k.probability(2) - 0.1).abs() < 1e-15);
        assert!((k.probability(-2) - 0.1).abs() < 1e-15);

        let tiny = discretize(&JumpKernel::ssrw(), 1.0, 1e-9).unwrap();
        assert!(tiny.stay > 1.0 - 1e-8);
    }

    #[test]
    fn discretize_rejects_large_steps() {
        assert!(discretize(&JumpKernel::ssrw(), 1.0, 1.0).is_err());
        assert!(discretize(&JumpKernel::ssrw(), 2.0, 0.6).is_err());
        assert!(discretize(&JumpKernel::ssrw(), 1.0, 0.0).is_err());
    }

    #[test]
    fn discretized_jumps_land_on_grid() {
        let k = discretize(&JumpKernel::ssrw(), 1.0, 0.25).unwrap();
        let p = k.sample_path(0, 20.0, &mut RngStream::new(5, 0).rng()).unwrap();
        for t in p.jump_times() {
            let steps = t / 0.25;
            assert!((steps - steps.round()).abs() < 1e-9);
            assert!(*t <= 20.0);
        }
    }

    #[test]
    fn csv_export_has_header_and_endpoints() {
        let p = LatticePath::from_jumps(0, 4.0, [(1.0, 1), (3.0, 0)]).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "time,position\n0.0,0\n1.0,1\n3.0,0\n4.0,0\n");
    }
}
