//! Executable pulse-sequence programs: polarization equalization, pseudo-pure
//! and Bell-state preparation by detuned Hartmann–Hahn (DHH) double resonance,
//! inversion recovery, NOE, and Bell-state relaxation with CPMG readout.
//!
//! Program text format, one event per line (`#` starts a comment, keywords are
//! case-insensitive, durations in seconds, angles in degrees, `t` is the swept
//! time variable):
//!
//! ```text
//! PULSE <1|2> <x|y|z> <deg>
//! DELAY <secs|t> <relax|coherent|both>
//! DHH <ZQ|DQ|HH> [secs]
//! CRUSH [ZQ]
//! PPS
//! CPMG <tau> <count|t>
//! READ <1|2> <SYM|ANTISYM|BOTH>
//! ```
//!
//! Conventions: pulses and rf blocks are ideal and never overlap relaxation;
//! DHH and HH blocks use rf phase −x (negative nutation amplitudes in
//! H = −ω₁S_{1x} − ω₂S_{2x} + ω_J S_{1z}S_{2z}), the phase for which the
//! x-basis Bell targets come out as listed for each preparation row. A bare
//! `CRUSH` dephases every coherence (heteronuclear gradients), `CRUSH ZQ`
//! keeps zero-quantum coherences. A CPMG train of n echoes (period 2τ, hard π
//! pulses about y on both spins) relaxes the state for 2τn as a single interval
//! with static offsets refocused; `t` as count selects the nearest even n.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dynamics::{apply_pulse, crush, evolve_coherent, relax_density, AwContext, CrusherMode, RfHamiltonian};
use crate::error::{Error, Result};
use crate::measure::{detect, state_fidelity, PeakPair, DEFAULT_GAIN};
use crate::redfield::{DiagonalRates, OffDiagonalRates};
use crate::spinops::{
    equilibrium_density, pure_deviation, product_ket, to_coherence_vector, Axis, BellStateId, CoherenceVector,
    DensityMatrix, Spin,
};

/// Default CPMG half-echo spacing τ [s].
pub const DEFAULT_CPMG_TAU: f64 = 1e-3;

/// Duration value of a program event.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum TimeSpec {
    Fixed(f64),
    /// The swept variable `t`.
    Swept,
}

impl TimeSpec {
    fn resolve(self, t: f64) -> f64 {
        match self {
            TimeSpec::Fixed(x) => x,
            TimeSpec::Swept => t,
        }
    }
}

/// Echo count of a CPMG train.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CountSpec {
    Fixed(u64),
    /// Nearest even count covering the swept time `t`.
    Swept,
}

/// What a delay does.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DelayMode {
    /// Relaxation only.
    Relax,
    /// Free coherent evolution under ω_J S_{1z}S_{2z} only.
    Coherent,
    /// Relaxation followed by the coherent step (never interleaved).
    Both,
}

/// Kind of a double-resonance rf block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DhhKind {
    /// Zero-quantum DHH, Δ = ω₁−ω₂ = ω_J/2.
    ZeroQuantum,
    /// Double-quantum DHH, Σ = ω₁+ω₂ = ω_J/2.
    DoubleQuantum,
    /// Resonant Hartmann–Hahn, ω₁ = ω₂ = (√15/4)ω_J.
    HartmannHahn,
}

impl DhhKind {
    fn token(self) -> &'static str {
        match self {
            DhhKind::ZeroQuantum => "ZQ",
            DhhKind::DoubleQuantum => "DQ",
            DhhKind::HartmannHahn => "HH",
        }
    }

    /// Nominal duration: π√2/ω_J for DHH, π/ω_J for HH.
    pub fn default_duration(self, omega_j: f64) -> f64 {
        match self {
            DhhKind::HartmannHahn => PI / omega_j,
            _ => PI * SQRT_2 / omega_j,
        }
    }
}

/// Default value of the unconstrained parameter (Σ for ZQ blocks, Δ for DQ blocks) in units of ω_J.
pub const DHH_FREE_PARAMETER: f64 = 2.0;

/// rf Hamiltonian of a DHH/HH block (rf phase −x). `free` is the unconstrained
/// combination in units of ω_J; it must not make either amplitude vanish nor
/// coincide with the constrained value.
pub fn dhh_hamiltonian(kind: DhhKind, omega_j: f64, free: f64) -> Result<RfHamiltonian> {
    if !(omega_j > 0.0) || !omega_j.is_finite() {
        return Err(Error::param("omega_j", "must be positive"));
    }
    let (w1, w2) = match kind {
        DhhKind::HartmannHahn => {
            let w = 15f64.sqrt() / 4.0 * omega_j;
            (w, w)
        }
        DhhKind::ZeroQuantum | DhhKind::DoubleQuantum => {
            if !free.is_finite() || (free.abs() - 0.5).abs() < 1e-6 {
                return Err(Error::param("dhh_free", "free parameter coincides with the resonance value ω_J/2"));
            }
            let (delta, sigma) = match kind {
                DhhKind::ZeroQuantum => (0.5 * omega_j, free * omega_j),
                _ => (free * omega_j, 0.5 * omega_j),
            };
            let (w1, w2) = (0.5 * (sigma + delta), 0.5 * (sigma - delta));
            if w1.abs() < 1e-9 * omega_j || w2.abs() < 1e-9 * omega_j {
                return Err(Error::param("dhh_free", "free parameter switches one rf field off"));
            }
            (w1, w2)
        }
    };
    Ok(RfHamiltonian::new(-w1, -w2, omega_j))
}

/// Which doublet component(s) a readout reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Component {
    Sym,
    Antisym,
    Both,
}

/// One program event.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Event {
    Pulse { spin: Spin, axis: Axis, degrees: f64 },
    Delay { duration: TimeSpec, mode: DelayMode },
    Dhh { kind: DhhKind, duration: Option<f64> },
    Crusher { mode: CrusherMode },
    /// Idealized pseudo-pure-state map to κ(|↑↑⟩⟨↑↑| − 𝕀/4), κ = (⟨S_{1z}⟩+⟨S_{2z}⟩)/2.
    Pps,
    Cpmg { tau: f64, count: CountSpec },
    Readout { spin: Spin, component: Component },
}

impl Event {
    fn is_swept(&self) -> bool {
        matches!(
            self,
            Event::Delay { duration: TimeSpec::Swept, .. } | Event::Cpmg { count: CountSpec::Swept, .. }
        )
    }
}

fn fmt_num(x: f64) -> String {
    // Shortest representation that round-trips.
    format!("{x:?}")
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Event::Pulse { spin, axis, degrees } => {
                write!(f, "PULSE {} {} {}", spin.number(), axis.letter(), fmt_num(*degrees))
            }
            Event::Delay { duration, mode } => {
                let d = match duration {
                    TimeSpec::Fixed(x) => fmt_num(*x),
                    TimeSpec::Swept => "t".into(),
                };
                let m = match mode {
                    DelayMode::Relax => "relax",
                    DelayMode::Coherent => "coherent",
                    DelayMode::Both => "both",
                };
                write!(f, "DELAY {d} {m}")
            }
            Event::Dhh { kind, duration } => match duration {
                Some(d) => write!(f, "DHH {} {}", kind.token(), fmt_num(*d)),
                None => write!(f, "DHH {}", kind.token()),
            },
            Event::Crusher { mode } => match mode {
                CrusherMode::PopulationsOnly => write!(f, "CRUSH"),
                CrusherMode::ZeroQuantumPreserving => write!(f, "CRUSH ZQ"),
            },
            Event::Pps => write!(f, "PPS"),
            Event::Cpmg { tau, count } => match count {
                CountSpec::Fixed(n) => write!(f, "CPMG {} {n}", fmt_num(*tau)),
                CountSpec::Swept => write!(f, "CPMG {} t", fmt_num(*tau)),
            },
            Event::Readout { spin, component } => {
                let c = match component {
                    Component::Sym => "SYM",
                    Component::Antisym => "ANTISYM",
                    Component::Both => "BOTH",
                };
                write!(f, "READ {} {c}", spin.number())
            }
        }
    }
}

/// Ordered list of events terminated by exactly one readout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceProgram {
    events: Vec<Event>,
}

impl SequenceProgram {
    /// Validate and wrap an event list.
    pub fn new(events: Vec<Event>) -> Result<Self> {
        let reads = events.iter().filter(|e| matches!(e, Event::Readout { .. })).count();
        if reads != 1 || !matches!(events.last(), Some(Event::Readout { .. })) {
            return Err(Error::param("program", "exactly one READ must terminate the program"));
        }
        for e in &events {
            let bad = match *e {
                Event::Pulse { degrees, .. } => !degrees.is_finite(),
                Event::Delay { duration: TimeSpec::Fixed(d), .. } => !(d >= 0.0) || !d.is_finite(),
                Event::Dhh { duration: Some(d), .. } => !(d >= 0.0) || !d.is_finite(),
                Event::Cpmg { tau, .. } => !(tau > 0.0) || !tau.is_finite(),
                _ => false,
            };
            if bad {
                return Err(Error::param("program", format!("invalid value in `{e}`")));
            }
        }
        Ok(SequenceProgram { events })
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    /// The terminating readout.
    pub fn readout(&self) -> (Spin, Component) {
        match self.events.last() {
            Some(Event::Readout { spin, component }) => (*spin, *component),
            _ => unreachable!("validated at construction"),
        }
    }

    /// Parse the text format.
    pub fn parse(text: &str) -> Result<Self> {
        let mut events = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let perr = |msg: String| Error::Parse { line: i + 1, msg };
            let tok: Vec<&str> = line.split_whitespace().collect();
            let num = |s: &str, what: &str| -> Result<f64> {
                let x: f64 = s.parse().map_err(|_| perr(format!("bad {what} `{s}`")))?;
                if x.is_finite() {
                    Ok(x)
                } else {
                    Err(perr(format!("non-finite {what}")))
                }
            };
            let spin = |s: &str| -> Result<Spin> {
                s.parse::<u32>().ok().and_then(Spin::from_number).ok_or_else(|| perr(format!("bad spin `{s}`")))
            };
            let arity = |lo: usize, hi: usize| -> Result<()> {
                if tok.len() < lo || tok.len() > hi {
                    Err(perr(format!("`{}` expects {}..={} arguments", tok[0], lo - 1, hi - 1)))
                } else {
                    Ok(())
                }
            };
            let ev = match tok[0].to_ascii_uppercase().as_str() {
                "PULSE" => {
                    arity(4, 4)?;
                    let axis = Axis::from_letter(tok[2]).ok_or_else(|| perr(format!("bad axis `{}`", tok[2])))?;
                    Event::Pulse { spin: spin(tok[1])?, axis, degrees: num(tok[3], "angle")? }
                }
                "DELAY" => {
                    arity(3, 3)?;
                    let duration = if tok[1].eq_ignore_ascii_case("t") {
                        TimeSpec::Swept
                    } else {
                        let d = num(tok[1], "duration")?;
                        if d < 0.0 {
                            return Err(perr("negative duration".into()));
                        }
                        TimeSpec::Fixed(d)
                    };
                    let mode = match tok[2].to_ascii_lowercase().as_str() {
                        "relax" => DelayMode::Relax,
                        "coherent" => DelayMode::Coherent,
                        "both" => DelayMode::Both,
                        m => return Err(perr(format!("bad delay mode `{m}`"))),
                    };
                    Event::Delay { duration, mode }
                }
                "DHH" => {
                    arity(2, 3)?;
                    let kind = match tok[1].to_ascii_uppercase().as_str() {
                        "ZQ" => DhhKind::ZeroQuantum,
                        "DQ" => DhhKind::DoubleQuantum,
                        "HH" => DhhKind::HartmannHahn,
                        k => return Err(perr(format!("bad DHH kind `{k}`"))),
                    };
                    let duration = match tok.get(2) {
                        Some(s) => {
                            let d = num(s, "duration")?;
                            if d < 0.0 {
                                return Err(perr("negative duration".into()));
                            }
                            Some(d)
                        }
                        None => None,
                    };
                    Event::Dhh { kind, duration }
                }
                "CRUSH" => {
                    arity(1, 2)?;
                    let mode = match tok.get(1).map(|s| s.to_ascii_uppercase()) {
                        None => CrusherMode::PopulationsOnly,
                        Some(s) if s == "ZQ" => CrusherMode::ZeroQuantumPreserving,
                        Some(s) => return Err(perr(format!("bad crusher mode `{s}`"))),
                    };
                    Event::Crusher { mode }
                }
                "PPS" => {
                    arity(1, 1)?;
                    Event::Pps
                }
                "CPMG" => {
                    arity(3, 3)?;
                    let tau = num(tok[1], "tau")?;
                    if tau <= 0.0 {
                        return Err(perr("tau must be positive".into()));
                    }
                    let count = if tok[2].eq_ignore_ascii_case("t") {
                        CountSpec::Swept
                    } else {
                        CountSpec::Fixed(tok[2].parse().map_err(|_| perr(format!("bad count `{}`", tok[2])))?)
                    };
                    Event::Cpmg { tau, count }
                }
                "READ" => {
                    arity(3, 3)?;
                    let component = match tok[2].to_ascii_uppercase().as_str() {
                        "SYM" => Component::Sym,
                        "ANTISYM" => Component::Antisym,
                        "BOTH" => Component::Both,
                        c => return Err(perr(format!("bad component `{c}`"))),
                    };
                    Event::Readout { spin: spin(tok[1])?, component }
                }
                k => return Err(perr(format!("unknown event `{k}`"))),
            };
            events.push(ev);
        }
        SequenceProgram::new(events).map_err(|e| match e {
            Error::InvalidParameter { reason, .. } => Error::Parse { line: 0, msg: reason },
            other => other,
        })
    }
}

impl fmt::Display for SequenceProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.events {
            writeln!(f, "{e}")?;
        }
        Ok(())
    }
}

/// Additive Gaussian noise on recorded peak intensities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma: f64,
    pub seed: u64,
}

/// Everything a program needs besides its events.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimContext {
    pub rates: DiagonalRates,
    pub offdiag: OffDiagonalRates,
    pub eps1: f64,
    pub eps2: f64,
    /// Intra-pair J coupling [rad/s].
    pub omega_j: f64,
    pub gain: f64,
    /// Anderson–Weiss description of the slow-J part of the off-diagonal decay.
    pub aw: Option<AwContext>,
    pub noise: Option<NoiseModel>,
}

impl SimContext {
    /// Context with unit gain, no slow-J dynamics and no noise.
    pub fn new(rates: DiagonalRates, offdiag: OffDiagonalRates, eps1: f64, eps2: f64, omega_j: f64) -> Self {
        SimContext { rates, offdiag, eps1, eps2, omega_j, gain: DEFAULT_GAIN, aw: None, noise: None }
    }

    fn eq(&self) -> (f64, f64) {
        (self.eps1, self.eps2)
    }
}

fn pps_map(rho: &DensityMatrix) -> DensityMatrix {
    let v = to_coherence_vector(rho);
    let kappa = 0.5 * (v.v[crate::spinops::index::S1Z] + v.v[crate::spinops::index::S2Z]);
    pure_deviation(&product_ket(true, true)).scaled(kappa)
}

fn apply_event(rho: &DensityMatrix, ev: &Event, ctx: &SimContext, t: f64) -> Result<DensityMatrix> {
    Ok(match *ev {
        Event::Pulse { spin, axis, degrees } => apply_pulse(rho, spin, axis, degrees.to_radians()),
        Event::Delay { duration, mode } => {
            let d = duration.resolve(t);
            if d < 0.0 || d.is_nan() {
                return Err(Error::NegativeTime(d));
            }
            let free = RfHamiltonian::new(0.0, 0.0, ctx.omega_j);
            match mode {
                DelayMode::Relax => relax_density(rho, &ctx.rates, &ctx.offdiag, ctx.eq(), d, ctx.aw.as_ref())?,
                DelayMode::Coherent => evolve_coherent(rho, &free, d)?,
                DelayMode::Both => {
                    let r = relax_density(rho, &ctx.rates, &ctx.offdiag, ctx.eq(), d, ctx.aw.as_ref())?;
                    evolve_coherent(&r, &free, d)?
                }
            }
        }
        Event::Dhh { kind, duration } => {
            let h = dhh_hamiltonian(kind, ctx.omega_j, DHH_FREE_PARAMETER)?;
            let d = duration.unwrap_or_else(|| kind.default_duration(ctx.omega_j));
            evolve_coherent(rho, &h, d)?
        }
        Event::Crusher { mode } => crush(rho, mode),
        Event::Pps => pps_map(rho),
        Event::Cpmg { tau, count } => {
            let n = match count {
                CountSpec::Fixed(n) => n,
                CountSpec::Swept => {
                    if t < 0.0 || t.is_nan() {
                        return Err(Error::NegativeTime(t));
                    }
                    2 * (t / (4.0 * tau)).round() as u64
                }
            };
            let total = 2.0 * tau * n as f64;
            let mut r = relax_density(rho, &ctx.rates, &ctx.offdiag, ctx.eq(), total, ctx.aw.as_ref())?;
            if n % 2 == 1 {
                r = apply_pulse(&r, Spin::One, Axis::Y, PI);
                r = apply_pulse(&r, Spin::Two, Axis::Y, PI);
            }
            r
        }
        Event::Readout { .. } => *rho,
    })
}

/// Actual evolution time a swept value `t` maps to in a program (CPMG rounds to whole echo pairs).
pub fn effective_time(program: &SequenceProgram, t: f64) -> f64 {
    for e in program.events() {
        if let Event::Cpmg { tau, count: CountSpec::Swept } = e {
            return 2.0 * tau * (2 * (t / (4.0 * tau)).round() as u64) as f64;
        }
    }
    t
}

/// Run `program` from `rho0` for swept value `t`; returns the final state before detection.
pub fn run_program_state(program: &SequenceProgram, rho0: &DensityMatrix, ctx: &SimContext, t: f64) -> Result<DensityMatrix> {
    let mut rho = *rho0;
    for e in program.events() {
        rho = apply_event(&rho, e, ctx, t)?;
    }
    Ok(rho)
}

/// Run `program` from thermal equilibrium for each swept value; noiseless intensities.
pub fn run_program(program: &SequenceProgram, ctx: &SimContext, times: &[f64]) -> Result<Vec<PeakPair>> {
    let (spin, _) = program.readout();
    let events = program.events();
    // The prefix before the first swept event is shared by every time point.
    let split = events.iter().position(|e| e.is_swept()).unwrap_or(events.len());
    let mut prefix = equilibrium_density(ctx.eps1, ctx.eps2);
    for e in &events[..split] {
        prefix = apply_event(&prefix, e, ctx, 0.0)?;
    }
    times
        .iter()
        .map(|&t| {
            if t < 0.0 || t.is_nan() {
                return Err(Error::NegativeTime(t));
            }
            let mut rho = prefix;
            for e in &events[split..] {
                rho = apply_event(&rho, e, ctx, t)?;
            }
            Ok(detect(&rho, spin, ctx.gain))
        })
        .collect()
}

/// Result of a preparation step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreparationReport {
    #[serde(skip)]
    pub state: Option<DensityMatrix>,
    /// Fidelity of the pure part with the intended target, when one exists.
    pub fidelity: Option<f64>,
    pub coherence: CoherenceVector,
}

impl PreparationReport {
    fn from_state(state: DensityMatrix, fidelity: Option<f64>) -> Self {
        PreparationReport { coherence: to_coherence_vector(&state), state: Some(state), fidelity }
    }

    /// Final deviation density matrix.
    pub fn density(&self) -> DensityMatrix {
        self.state.unwrap_or_else(|| crate::spinops::from_coherence_vector(&self.coherence))
    }
}

fn ideal_ctx(eps1: f64, eps2: f64, omega_j: f64) -> SimContext {
    SimContext::new(DiagonalRates::default(), OffDiagonalRates::default(), eps1, eps2, omega_j)
}

fn run_events(events: &[Event], rho: DensityMatrix, ctx: &SimContext) -> Result<DensityMatrix> {
    events.iter().try_fold(rho, |r, e| apply_event(&r, e, ctx, 0.0))
}

/// Step-1 events: (π/2)_{1y},(π/2)_{2y} → HH block → (−π/2)_{1y},(−π/2)_{2y} → crusher.
pub fn equalization_events() -> Vec<Event> {
    vec![
        Event::Pulse { spin: Spin::One, axis: Axis::Y, degrees: 90.0 },
        Event::Pulse { spin: Spin::Two, axis: Axis::Y, degrees: 90.0 },
        Event::Dhh { kind: DhhKind::HartmannHahn, duration: None },
        Event::Pulse { spin: Spin::One, axis: Axis::Y, degrees: -90.0 },
        Event::Pulse { spin: Spin::Two, axis: Axis::Y, degrees: -90.0 },
        Event::Crusher { mode: CrusherMode::PopulationsOnly },
    ]
}

/// Equalize the two z-polarizations to (ε₁+ε₂)/2 each.
pub fn prepare_equalized_polarization(eps1: f64, eps2: f64, omega_j: f64) -> Result<PreparationReport> {
    if !(omega_j > 0.0) {
        return Err(Error::param("omega_j", "must be positive"));
    }
    let ctx = ideal_ctx(eps1, eps2, omega_j);
    let rho = run_events(&equalization_events(), equilibrium_density(eps1, eps2), &ctx)?;
    Ok(PreparationReport::from_state(rho, None))
}

/// Idealized pseudo-pure state ((ε₁+ε₂)/2)(|↑↑⟩⟨↑↑| − 𝕀/4).
pub fn prepare_pps_upup(eps1: f64, eps2: f64) -> PreparationReport {
    let kappa = 0.5 * (eps1 + eps2);
    let rho = pure_deviation(&product_ket(true, true)).scaled(kappa);
    let fidelity = if kappa != 0.0 {
        let ideal = pure_deviation(&product_ket(true, true));
        let num = (ideal.matrix() * rho.matrix()).trace().re;
        Some((0.25 + 0.75 * num.signum()).clamp(0.0, 1.0))
    } else {
        None
    };
    PreparationReport::from_state(rho, fidelity)
}

/// Step-3 events for a z-basis Bell target: φ₁,φ₂ pulses → DHH → (−π/2)_{1y},(−π/2)_{2y}.
pub fn bell_events(target: BellStateId) -> Result<Vec<Event>> {
    let (phi1, phi2, kind) = match target {
        BellStateId::PsiMinusZ => (-90.0, -90.0, DhhKind::DoubleQuantum),
        BellStateId::S0 => (-90.0, 90.0, DhhKind::ZeroQuantum),
        BellStateId::T0z => (90.0, -90.0, DhhKind::ZeroQuantum),
        BellStateId::PsiPlusZ => (90.0, 90.0, DhhKind::DoubleQuantum),
        other => return Err(Error::param("target", format!("{} is not a z-basis Bell target", other.name()))),
    };
    Ok(vec![
        Event::Pulse { spin: Spin::One, axis: Axis::Y, degrees: phi1 },
        Event::Pulse { spin: Spin::Two, axis: Axis::Y, degrees: phi2 },
        Event::Dhh { kind, duration: None },
        Event::Pulse { spin: Spin::One, axis: Axis::Y, degrees: -90.0 },
        Event::Pulse { spin: Spin::Two, axis: Axis::Y, degrees: -90.0 },
    ])
}

/// Full preparation chain: equalization, PPS, Bell step.
pub fn preparation_events(target: BellStateId) -> Result<Vec<Event>> {
    let mut ev = equalization_events();
    ev.push(Event::Pps);
    ev.extend(bell_events(target)?);
    Ok(ev)
}

/// Prepare a Bell PPS ((ε₁+ε₂)/2)·(|Ψ⟩⟨Ψ| − 𝕀/4) from thermal equilibrium.
pub fn prepare_bell_pps(target: BellStateId, eps1: f64, eps2: f64, omega_j: f64) -> Result<PreparationReport> {
    if !(omega_j > 0.0) {
        return Err(Error::param("omega_j", "must be positive"));
    }
    let ctx = ideal_ctx(eps1, eps2, omega_j);
    let rho = run_events(&preparation_events(target)?, equilibrium_density(eps1, eps2), &ctx)?;
    let fidelity = state_fidelity(&rho, target).ok();
    Ok(PreparationReport::from_state(rho, fidelity))
}

/// Kind of a recorded experiment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ExperimentKind {
    InversionRecovery { spin: Spin },
    Noe { inverted: Spin, observed: Spin },
    BellZz { target: BellStateId },
    BellXx { target: BellStateId, tau: f64 },
    Program,
}

/// Readout channel of a Bell relaxation experiment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum BellChannel {
    /// ⟨2S_{1z}S_{2z}⟩ via (π/2)_{1y} and the spin-1 antisymmetric component.
    Zz,
    /// ⟨2S_{1x}S_{2x}⟩ under a CPMG train of half-spacing τ, via (π/2)_{2y}; the
    /// spin-1 antisymmetric component equals −gain·⟨2S_{1x}S_{2x}⟩.
    XxCpmg { tau: f64 },
}

/// Time series of doublet intensities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub name: String,
    pub kind: ExperimentKind,
    pub read_spin: Spin,
    pub component: Component,
    /// Evolution times [s].
    pub times: Vec<f64>,
    pub peaks: Vec<PeakPair>,
    /// Noise σ per peak intensity (0 when noiseless).
    pub noise_sigma: f64,
    /// Equilibrium symmetric intensity of the read spin (per-spin normalization).
    pub equilibrium_sym: f64,
}

impl ExperimentRecord {
    pub fn symmetric(&self) -> Vec<f64> {
        self.peaks.iter().map(|p| p.i_plus + p.i_minus).collect()
    }

    pub fn antisymmetric(&self) -> Vec<f64> {
        self.peaks.iter().map(|p| p.i_plus - p.i_minus).collect()
    }

    /// σ of a symmetric/antisymmetric component.
    pub fn component_sigma(&self) -> f64 {
        self.noise_sigma * SQRT_2
    }
}

fn check_grid(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::param("times", "empty grid"));
    }
    if times.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
        return Err(Error::NegativeTime(times.iter().cloned().fold(f64::NAN, f64::min)));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("times", "grid must be strictly increasing"));
    }
    Ok(())
}

fn add_noise(peaks: &mut [PeakPair], noise: &NoiseModel, stream: u64) -> Result<()> {
    if noise.sigma <= 0.0 {
        return Ok(());
    }
    let dist = Normal::new(0.0, noise.sigma).map_err(|e| Error::param("noise_sigma", e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    for p in peaks.iter_mut() {
        p.i_plus += dist.sample(&mut rng);
        p.i_minus += dist.sample(&mut rng);
    }
    Ok(())
}

fn record(
    name: String,
    kind: ExperimentKind,
    program: &SequenceProgram,
    times: &[f64],
    ctx: &SimContext,
    stream: u64,
) -> Result<ExperimentRecord> {
    check_grid(times)?;
    let mut peaks = run_program(program, ctx, times)?;
    if let Some(noise) = &ctx.noise {
        add_noise(&mut peaks, noise, stream)?;
    }
    let (spin, component) = program.readout();
    let equilibrium_sym = ctx.gain * if spin == Spin::One { ctx.eps1 } else { ctx.eps2 };
    Ok(ExperimentRecord {
        name,
        kind,
        read_spin: spin,
        component,
        times: times.iter().map(|&t| effective_time(program, t)).collect(),
        peaks,
        noise_sigma: ctx.noise.map_or(0.0, |n| n.sigma),
        equilibrium_sym,
    })
}

/// Inversion-recovery program: (π)_{ny} — t — (π/2)_{ny} — read spin n.
pub fn inversion_recovery_program(spin: Spin) -> SequenceProgram {
    SequenceProgram::new(vec![
        Event::Pulse { spin, axis: Axis::Y, degrees: 180.0 },
        Event::Delay { duration: TimeSpec::Swept, mode: DelayMode::Relax },
        Event::Pulse { spin, axis: Axis::Y, degrees: 90.0 },
        Event::Readout { spin, component: Component::Both },
    ])
    .expect("static program is valid")
}

/// NOE program: (π)_{iy} — t — (π/2)_{oy} — read spin o.
pub fn noe_program(inverted: Spin, observed: Spin) -> SequenceProgram {
    SequenceProgram::new(vec![
        Event::Pulse { spin: inverted, axis: Axis::Y, degrees: 180.0 },
        Event::Delay { duration: TimeSpec::Swept, mode: DelayMode::Relax },
        Event::Pulse { spin: observed, axis: Axis::Y, degrees: 90.0 },
        Event::Readout { spin: observed, component: Component::Sym },
    ])
    .expect("static program is valid")
}

/// Bell relaxation program for a z-basis target and readout channel.
pub fn bell_program(target: BellStateId, channel: BellChannel) -> Result<SequenceProgram> {
    let mut ev = preparation_events(target)?;
    match channel {
        BellChannel::Zz => {
            ev.push(Event::Delay { duration: TimeSpec::Swept, mode: DelayMode::Relax });
            ev.push(Event::Pulse { spin: Spin::One, axis: Axis::Y, degrees: 90.0 });
        }
        BellChannel::XxCpmg { tau } => {
            ev.push(Event::Cpmg { tau, count: CountSpec::Swept });
            ev.push(Event::Pulse { spin: Spin::Two, axis: Axis::Y, degrees: 90.0 });
        }
    }
    ev.push(Event::Readout { spin: Spin::One, component: Component::Antisym });
    SequenceProgram::new(ev)
}

/// Inversion recovery of `spin`; symmetric component tracks ⟨S_{nz}⟩(t), antisymmetric ⟨2S_{1z}S_{2z}⟩(t).
pub fn run_inversion_recovery(spin: Spin, times: &[f64], ctx: &SimContext) -> Result<ExperimentRecord> {
    record(
        format!("inversion_recovery_{}", spin.number()),
        ExperimentKind::InversionRecovery { spin },
        &inversion_recovery_program(spin),
        times,
        ctx,
        spin.number() as u64,
    )
}

/// NOE: invert one spin, follow the symmetric component of the other.
pub fn run_noe(inverted: Spin, observed: Spin, times: &[f64], ctx: &SimContext) -> Result<ExperimentRecord> {
    if inverted == observed {
        return Err(Error::param("noe", "inverted and observed spins must differ"));
    }
    record(
        format!("noe_{}to{}", inverted.number(), observed.number()),
        ExperimentKind::Noe { inverted, observed },
        &noe_program(inverted, observed),
        times,
        ctx,
        10 + inverted.number() as u64,
    )
}

/// Bell-state relaxation read through the zz or CPMG xx channel.
pub fn run_bell_relaxation(target: BellStateId, times: &[f64], channel: BellChannel, ctx: &SimContext) -> Result<ExperimentRecord> {
    let program = bell_program(target, channel)?;
    let idx = BellStateId::Z_BASIS.iter().position(|&b| b == target).unwrap_or(0) as u64;
    let (name, kind, stream) = match channel {
        BellChannel::Zz => (format!("bell_zz_{}", target.name()), ExperimentKind::BellZz { target }, 20 + idx),
        BellChannel::XxCpmg { tau } => {
            (format!("bell_xx_{}", target.name()), ExperimentKind::BellXx { target, tau }, 30 + idx)
        }
    };
    record(name, kind, &program, times, ctx, stream)
}

/// Run a user program from equilibrium as a generic experiment.
pub fn run_custom(name: &str, program: &SequenceProgram, times: &[f64], ctx: &SimContext) -> Result<ExperimentRecord> {
    record(name.to_string(), ExperimentKind::Program, program, times, ctx, 100)
}

/// The full battery used for rate extraction.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Battery {
    pub ir1: Option<ExperimentRecord>,
    pub ir2: Option<ExperimentRecord>,
    pub noe12: Option<ExperimentRecord>,
    pub noe21: Option<ExperimentRecord>,
    /// zz channel of ZQ (S0) and DQ (ψ₊) Bell starts.
    pub zz_zq: Option<ExperimentRecord>,
    pub zz_dq: Option<ExperimentRecord>,
    /// xx channel of the four Bell starts, in the order S0, T0z, ψ₊, ψ₋.
    pub xx: [Option<ExperimentRecord>; 4],
}

impl Battery {
    pub fn records(&self) -> Vec<&ExperimentRecord> {
        [&self.ir1, &self.ir2, &self.noe12, &self.noe21, &self.zz_zq, &self.zz_dq]
            .into_iter()
            .chain(self.xx.iter())
            .filter_map(|r| r.as_ref())
            .collect()
    }
}

/// Generate every experiment of the rate battery on a shared time grid.
pub fn run_battery(times: &[f64], ctx: &SimContext, cpmg_tau: f64) -> Result<Battery> {
    let xx = |b| run_bell_relaxation(b, times, BellChannel::XxCpmg { tau: cpmg_tau }, ctx).map(Some);
    Ok(Battery {
        ir1: Some(run_inversion_recovery(Spin::One, times, ctx)?),
        ir2: Some(run_inversion_recovery(Spin::Two, times, ctx)?),
        noe12: Some(run_noe(Spin::One, Spin::Two, times, ctx)?),
        noe21: Some(run_noe(Spin::Two, Spin::One, times, ctx)?),
        zz_zq: Some(run_bell_relaxation(BellStateId::S0, times, BellChannel::Zz, ctx)?),
        zz_dq: Some(run_bell_relaxation(BellStateId::PsiPlusZ, times, BellChannel::Zz, ctx)?),
        xx: [
            xx(BellStateId::S0)?,
            xx(BellStateId::T0z)?,
            xx(BellStateId::PsiPlusZ)?,
            xx(BellStateId::PsiMinusZ)?,
        ],
    })
}
