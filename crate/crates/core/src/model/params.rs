use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Tick, Vec2};

/// Circular obstacle: `center` and avoidance radius `radius` (m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub center: Vec2,
    pub radius: f64,
}

/// Raw simulation parameters. Defaults are the reference values used
/// throughout the project (node radii, channel ranges, message intervals).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub n_uavs: usize,
    /// Speed cap, m/s.
    pub v_max: f64,
    // Node-level (pigeon) interaction radii.
    pub r_rep: f64,
    pub r_al: f64,
    pub r_att: f64,
    // Formation-level (starling) interaction radii, measured as surface distance.
    pub group_r_rep: f64,
    pub group_r_al: f64,
    pub group_r_att: f64,
    /// Short channel range.
    pub d_tr: f64,
    /// Long channel range.
    pub d_tr_long: f64,
    /// Interaction gain added to the node force law.
    pub a_coeff: f64,
    /// Follow-threshold sensitivity.
    pub alpha: f64,
    pub t_hello: f64,
    pub t_chello: f64,
    pub t_tc: f64,
    pub t_htc: f64,
    pub t_cmn: f64,
    pub t_mwt: f64,
    pub dt: f64,
    pub obstacle: Option<Obstacle>,
    pub destination: Vec2,
    pub s_max: u8,
    /// Magnitude cap applied to every resultant force, m/s².
    pub f_clamp: f64,
    pub blind_rear_half_angle_node: f64,
    pub seed: u64,
    /// Leader goal-seeking gain, m/s².
    pub w_goal: f64,
    /// No goal force within this distance of the destination.
    pub goal_deadband: f64,
    pub w_sep: f64,
    pub w_align: f64,
    pub w_coh: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            n_uavs: 120,
            v_max: 20.0,
            r_rep: 100.0,
            r_al: 150.0,
            r_att: 200.0,
            group_r_rep: 200.0,
            group_r_al: 400.0,
            group_r_att: 600.0,
            d_tr: 200.0,
            d_tr_long: 1000.0,
            a_coeff: 0.5,
            alpha: 1.0,
            t_hello: 2.0,
            t_chello: 2.0,
            t_tc: 5.0,
            t_htc: 5.0,
            t_cmn: 2.0,
            t_mwt: 10.0,
            dt: 0.5,
            obstacle: None,
            destination: Vec2::new(1.0e6, 0.0),
            s_max: 4,
            f_clamp: 5.0,
            blind_rear_half_angle_node: 45.0,
            seed: 1,
            w_goal: 1.0,
            goal_deadband: 100.0,
            w_sep: 1.5,
            w_align: 1.0,
            w_coh: 1.0,
        }
    }
}

/// One violated constraint, rendered with the offending values substituted.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Violation {
    #[error("C-HELLO interval too long: t_chello × v_max < R_rep / 2 fails ({lhs} = {t_chello} × {v_max} ≥ {rhs} = {r_rep} / 2)")]
    CHelloTooSlow {
        t_chello: f64,
        v_max: f64,
        r_rep: f64,
        lhs: f64,
        rhs: f64,
    },
    #[error("radii ordering: {0}")]
    RadiiOrdering(String),
    #[error("non-positive tick: dt = {0} (require dt > 0)")]
    NonPositiveTick(f64),
    #[error("timer {name} = {value} s is not a positive integer multiple of dt = {dt} s")]
    TimerNotMultiple { name: &'static str, value: f64, dt: f64 },
    #[error("invalid value: {0}")]
    InvalidValue(String),
}

/// Every violation found in a configuration.
#[derive(Debug, Clone, PartialEq, Error)]
pub struct ConfigErrors(pub Vec<Violation>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} configuration violation(s)", self.0.len())?;
        for v in &self.0 {
            write!(f, "\n  - {v}")?;
        }
        Ok(())
    }
}

impl ConfigErrors {
    pub fn violations(&self) -> &[Violation] {
        &self.0
    }
}

/// Parameters that passed [`validate_config`], with timer periods converted
/// to whole ticks.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedParams {
    params: SimParams,
    pub hello_ticks: Tick,
    pub chello_ticks: Tick,
    pub tc_ticks: Tick,
    pub htc_ticks: Tick,
    pub cmn_ticks: Tick,
    pub mwt_ticks: Tick,
}

impl ValidatedParams {
    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn into_inner(self) -> SimParams {
        self.params
    }

    /// Ticks covering `seconds`, rounded to the nearest whole tick.
    pub fn ticks_for(&self, seconds: f64) -> Tick {
        (seconds / self.params.dt).round().max(0.0) as Tick
    }
}

impl Deref for ValidatedParams {
    type Target = SimParams;
    fn deref(&self) -> &SimParams {
        &self.params
    }
}

fn ordering_chain(out: &mut Vec<Violation>, chain: &[(&str, f64)], last_inclusive: bool) {
    if chain[0].1 <= 0.0 || !chain[0].1.is_finite() {
        out.push(Violation::RadiiOrdering(format!(
            "0 < {} fails ({} = {})",
            chain[0].0, chain[0].0, chain[0].1
        )));
    }
    for (i, w) in chain.windows(2).enumerate() {
        let inclusive = last_inclusive && i == chain.len() - 2;
        let ok = if inclusive { w[0].1 <= w[1].1 } else { w[0].1 < w[1].1 };
        if !ok {
            let op = if inclusive { "≤" } else { "<" };
            out.push(Violation::RadiiOrdering(format!(
                "{} {op} {} fails ({} {op} {} is false)",
                w[0].0, w[1].0, w[0].1, w[1].1
            )));
        }
    }
}

fn timer_ticks(name: &'static str, value: f64, dt: f64, out: &mut Vec<Violation>) -> Tick {
    let ratio = value / dt;
    let rounded = ratio.round();
    if !(value > 0.0) || rounded < 1.0 || (ratio - rounded).abs() > 1e-9 * ratio.abs().max(1.0) {
        out.push(Violation::TimerNotMultiple { name, value, dt });
        return 1;
    }
    rounded as Tick
}

/// Checks every parameter invariant and returns the accepted parameters, or
/// all violations at once.
pub fn validate_config(raw: SimParams) -> Result<ValidatedParams, ConfigErrors> {
    let p = &raw;
    let mut v = Vec::new();

    if !(p.dt > 0.0) || !p.dt.is_finite() {
        v.push(Violation::NonPositiveTick(p.dt));
    }
    ordering_chain(
        &mut v,
        &[("r_rep", p.r_rep), ("r_al", p.r_al), ("r_att", p.r_att), ("d_tr", p.d_tr)],
        true,
    );
    ordering_chain(
        &mut v,
        &[
            ("R_rep", p.group_r_rep),
            ("R_al", p.group_r_al),
            ("R_att", p.group_r_att),
            ("D_tr", p.d_tr_long),
        ],
        true,
    );

    let lhs = p.t_chello * p.v_max;
    let rhs = p.group_r_rep / 2.0;
    if !(lhs < rhs) {
        v.push(Violation::CHelloTooSlow {
            t_chello: p.t_chello,
            v_max: p.v_max,
            r_rep: p.group_r_rep,
            lhs,
            rhs,
        });
    }

    let positive = [
        ("v_max", p.v_max),
        ("A", p.a_coeff),
        ("alpha", p.alpha),
        ("f_clamp", p.f_clamp),
        ("w_goal", p.w_goal),
        ("w_sep", p.w_sep),
        ("w_align", p.w_align),
        ("w_coh", p.w_coh),
    ];
    for (name, value) in positive {
        if !(value > 0.0) || !value.is_finite() {
            v.push(Violation::InvalidValue(format!("{name} = {value} (require {name} > 0)")));
        }
    }
    if !(p.goal_deadband >= 0.0) {
        v.push(Violation::InvalidValue(format!(
            "goal_deadband = {} (require ≥ 0)",
            p.goal_deadband
        )));
    }
    if p.n_uavs == 0 || p.n_uavs > u16::MAX as usize {
        v.push(Violation::InvalidValue(format!(
            "n_uavs = {} (require 1 ≤ n_uavs ≤ {})",
            p.n_uavs,
            u16::MAX
        )));
    }
    if p.s_max == 0 || p.s_max > 63 {
        v.push(Violation::InvalidValue(format!("s_max = {} (require 1 ≤ s_max ≤ 63)", p.s_max)));
    }
    if !(0.0..180.0).contains(&p.blind_rear_half_angle_node) {
        v.push(Violation::InvalidValue(format!(
            "blind_rear_half_angle_node = {} (require 0 ≤ angle < 180)",
            p.blind_rear_half_angle_node
        )));
    }
    if !p.destination.is_finite() {
        v.push(Violation::InvalidValue("destination must be finite".into()));
    }
    if let Some(o) = p.obstacle {
        if !(o.radius > 0.0) || !o.center.is_finite() {
            v.push(Violation::InvalidValue(format!(
                "obstacle radius = {} at {} (require finite center and radius > 0)",
                o.radius, o.center
            )));
        }
    }

    let dt = if p.dt > 0.0 { p.dt } else { 1.0 };
    let hello_ticks = timer_ticks("t_hello", p.t_hello, dt, &mut v);
    let chello_ticks = timer_ticks("t_chello", p.t_chello, dt, &mut v);
    let tc_ticks = timer_ticks("t_tc", p.t_tc, dt, &mut v);
    let htc_ticks = timer_ticks("t_htc", p.t_htc, dt, &mut v);
    let cmn_ticks = timer_ticks("t_cmn", p.t_cmn, dt, &mut v);
    let mwt_ticks = timer_ticks("t_mwt", p.t_mwt, dt, &mut v);

    if !v.is_empty() {
        return Err(ConfigErrors(v));
    }
    Ok(ValidatedParams {
        params: raw,
        hello_ticks,
        chello_ticks,
        tc_ticks,
        htc_ticks,
        cmn_ticks,
        mwt_ticks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values_accepted() {
        let v = validate_config(SimParams::default()).expect("defaults valid");
        assert_eq!(v.hello_ticks, 4);
        assert_eq!(v.tc_ticks, 10);
        assert_eq!(v.mwt_ticks, 20);
        // 2 × 20 = 40 < 100
        assert!(v.t_chello * v.v_max < v.group_r_rep / 2.0);
    }

    #[test]
    fn chello_boundary_is_rejected() {
        let p = SimParams { t_chello: 5.0, ..SimParams::default() };
        let err = validate_config(p).unwrap_err();
        assert_eq!(err.0.len(), 1);
        match &err.0[0] {
            Violation::CHelloTooSlow { lhs, rhs, .. } => {
                assert_eq!(*lhs, 100.0);
                assert_eq!(*rhs, 100.0);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("100 = 5 × 20 ≥ 100 = 200 / 2"), "{err}");
    }

    #[test]
    fn attraction_radius_beyond_channel_is_rejected() {
        let p = SimParams { r_att: 250.0, ..SimParams::default() };
        let err = validate_config(p).unwrap_err();
        assert!(err
            .0
            .iter()
            .any(|v| matches!(v, Violation::RadiiOrdering(s) if s.contains("r_att ≤ d_tr") && s.contains("250 ≤ 200"))));
    }

    #[test]
    fn long_range_may_equal_attraction_radius() {
        let p = SimParams { d_tr_long: 600.0, ..SimParams::default() };
        assert!(validate_config(p).is_ok());
    }

    #[test]
    fn zero_tick_rejected() {
        let p = SimParams { dt: 0.0, ..SimParams::default() };
        let err = validate_config(p).unwrap_err();
        assert!(err.0.iter().any(|v| matches!(v, Violation::NonPositiveTick(_))));
    }

    #[test]
    fn timers_must_be_tick_multiples() {
        let p = SimParams { t_tc: 5.2, ..SimParams::default() };
        let err = validate_config(p).unwrap_err();
        assert!(matches!(err.0[0], Violation::TimerNotMultiple { name: "t_tc", .. }));
    }

    #[test]
    fn reports_every_violation() {
        let p = SimParams { t_chello: 6.0, r_rep: 300.0, n_uavs: 0, ..SimParams::default() };
        let err = validate_config(p).unwrap_err();
        assert!(err.0.len() >= 3, "{err}");
    }

    #[test]
    fn validation_is_idempotent() {
        let v = validate_config(SimParams::default()).unwrap();
        let again = validate_config(v.clone().into_inner()).unwrap();
        assert_eq!(v, again);
    }
}
