//! Flat `key = value` configuration files.
//!
//! Keys are the parameter names (`R_rep`, `D_tr`, `A` keep their case),
//! `#` starts a comment, and any key not listed here is an error. Vectors are
//! written `x, y`; the obstacle is `cx, cy, radius` or `none`.

use std::fmt::Write as _;

use thiserror::Error;

use super::{Obstacle, SimParams, Vec2};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigParseError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key {key:?} given twice")]
    Duplicate { line: usize, key: String },
    #[error("line {line}: bad value for {key}: {value:?} ({reason})")]
    BadValue {
        line: usize,
        key: String,
        value: String,
        reason: &'static str,
    },
}

const KEYS: &[&str] = &[
    "n_uavs",
    "v_max",
    "r_rep",
    "r_al",
    "r_att",
    "R_rep",
    "R_al",
    "R_att",
    "d_tr",
    "D_tr",
    "A",
    "alpha",
    "t_hello",
    "t_chello",
    "t_tc",
    "t_htc",
    "t_cmn",
    "t_mwt",
    "dt",
    "obstacle",
    "destination",
    "s_max",
    "f_clamp",
    "blind_rear_half_angle_node",
    "seed",
    "w_goal",
    "goal_deadband",
    "w_sep",
    "w_align",
    "w_coh",
];

fn parse_reals(value: &str) -> Option<Vec<f64>> {
    let trimmed = value.trim().trim_start_matches('(').trim_end_matches(')');
    trimmed
        .split(',')
        .map(|s| s.trim().parse::<f64>().ok().filter(|v| v.is_finite()))
        .collect()
}

/// Parses a configuration file on top of the default parameters.
pub fn parse_config(text: &str) -> Result<SimParams, ConfigParseError> {
    let mut p = SimParams::default();
    let mut seen = std::collections::HashSet::new();

    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw_line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ConfigParseError::Syntax { line, text: raw_line.to_string() });
        };
        let key = key.trim();
        let value = value.trim();
        if !KEYS.contains(&key) {
            return Err(ConfigParseError::UnknownKey { line, key: key.to_string() });
        }
        if !seen.insert(key.to_string()) {
            return Err(ConfigParseError::Duplicate { line, key: key.to_string() });
        }
        let bad = |reason| ConfigParseError::BadValue {
            line,
            key: key.to_string(),
            value: value.to_string(),
            reason,
        };
        let real = || -> Result<f64, ConfigParseError> {
            match parse_reals(value).as_deref() {
                Some([v]) => Ok(*v),
                _ => Err(bad("expected a finite real number")),
            }
        };
        match key {
            "n_uavs" => p.n_uavs = value.parse().map_err(|_| bad("expected a count"))?,
            "s_max" => p.s_max = value.parse().map_err(|_| bad("expected a level in 1..=63"))?,
            "seed" => p.seed = value.parse().map_err(|_| bad("expected an unsigned integer"))?,
            "destination" => match parse_reals(value).as_deref() {
                Some([x, y]) => p.destination = Vec2::new(*x, *y),
                _ => return Err(bad("expected `x, y`")),
            },
            "obstacle" => {
                if value.eq_ignore_ascii_case("none") {
                    p.obstacle = None;
                } else {
                    match parse_reals(value).as_deref() {
                        Some([x, y, r]) => {
                            p.obstacle = Some(Obstacle { center: Vec2::new(*x, *y), radius: *r })
                        }
                        _ => return Err(bad("expected `cx, cy, radius` or `none`")),
                    }
                }
            }
            "v_max" => p.v_max = real()?,
            "r_rep" => p.r_rep = real()?,
            "r_al" => p.r_al = real()?,
            "r_att" => p.r_att = real()?,
            "R_rep" => p.group_r_rep = real()?,
            "R_al" => p.group_r_al = real()?,
            "R_att" => p.group_r_att = real()?,
            "d_tr" => p.d_tr = real()?,
            "D_tr" => p.d_tr_long = real()?,
            "A" => p.a_coeff = real()?,
            "alpha" => p.alpha = real()?,
            "t_hello" => p.t_hello = real()?,
            "t_chello" => p.t_chello = real()?,
            "t_tc" => p.t_tc = real()?,
            "t_htc" => p.t_htc = real()?,
            "t_cmn" => p.t_cmn = real()?,
            "t_mwt" => p.t_mwt = real()?,
            "dt" => p.dt = real()?,
            "f_clamp" => p.f_clamp = real()?,
            "blind_rear_half_angle_node" => p.blind_rear_half_angle_node = real()?,
            "w_goal" => p.w_goal = real()?,
            "goal_deadband" => p.goal_deadband = real()?,
            "w_sep" => p.w_sep = real()?,
            "w_align" => p.w_align = real()?,
            "w_coh" => p.w_coh = real()?,
            _ => unreachable!("key list and match arms disagree"),
        }
    }
    Ok(p)
}

/// Renders parameters in the format accepted by [`parse_config`].
pub fn render_config(p: &SimParams) -> String {
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    kv("n_uavs", p.n_uavs.to_string());
    kv("v_max", p.v_max.to_string());
    kv("r_rep", p.r_rep.to_string());
    kv("r_al", p.r_al.to_string());
    kv("r_att", p.r_att.to_string());
    kv("R_rep", p.group_r_rep.to_string());
    kv("R_al", p.group_r_al.to_string());
    kv("R_att", p.group_r_att.to_string());
    kv("d_tr", p.d_tr.to_string());
    kv("D_tr", p.d_tr_long.to_string());
    kv("A", p.a_coeff.to_string());
    kv("alpha", p.alpha.to_string());
    kv("t_hello", p.t_hello.to_string());
    kv("t_chello", p.t_chello.to_string());
    kv("t_tc", p.t_tc.to_string());
    kv("t_htc", p.t_htc.to_string());
    kv("t_cmn", p.t_cmn.to_string());
    kv("t_mwt", p.t_mwt.to_string());
    kv("dt", p.dt.to_string());
    kv(
        "obstacle",
        match p.obstacle {
            Some(o) => format!("{}, {}, {}", o.center.x, o.center.y, o.radius),
            None => "none".into(),
        },
    );
    kv("destination", format!("{}, {}", p.destination.x, p.destination.y));
    kv("s_max", p.s_max.to_string());
    kv("f_clamp", p.f_clamp.to_string());
    kv("blind_rear_half_angle_node", p.blind_rear_half_angle_node.to_string());
    kv("seed", p.seed.to_string());
    kv("w_goal", p.w_goal.to_string());
    kv("goal_deadband", p.goal_deadband.to_string());
    kv("w_sep", p.w_sep.to_string());
    kv("w_align", p.w_align.to_string());
    kv("w_coh", p.w_coh.to_string());
    s
}
