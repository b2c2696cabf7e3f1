//! Deterministic text output: fixed-significance number formatting, CSV
//! quoting, and the table renderers used by the CLI. Identical inputs
//! produce byte-identical output on every platform.

use crate::sweep::{MapRows, SweepRow};

pub const SIG_DIGITS: usize = 12;

pub const SWEEP_HEADER: &str =
    "swept_var,eq_label,kappa1,kappa2,sigma1,sigma2,theta_tilde,W1,W2,regime,flags";

/// Formats with a fixed number of significant digits, trimming trailing
/// zeros, switching to scientific notation outside a moderate magnitude
/// band. Matches across runs and platforms.
pub fn fmt_sig(x: f64, sig: usize) -> String {
    assert!(sig >= 1);
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", sig - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponential format");
    let exp: i32 = exp.parse().expect("exponent");
    if exp >= -4 && exp < sig as i32 {
        let decimals = (sig as i32 - 1 - exp).max(0) as usize;
        trim_decimal(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_decimal(mantissa.to_string()))
    }
}

fn trim_decimal(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    let t = s.trim_end_matches('0').trim_end_matches('.');
    t.to_string()
}

/// The nearest value representable with the given significant digits.
pub fn round_sig(x: f64, sig: usize) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", sig - 1, x).parse().expect("round-trip")
}

/// Escapes one CSV field: quotes when it contains a comma, quote, or
/// newline, doubling any embedded quotes.
pub fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn csv_line(fields: &[String]) -> String {
    fields
        .iter()
        .map(|f| csv_field(f))
        .collect::<Vec<_>>()
        .join(",")
}

fn opt_num(x: Option<f64>) -> String {
    match x {
        Some(v) if v.is_finite() => fmt_sig(v, SIG_DIGITS),
        _ => String::new(),
    }
}

pub fn sweep_rows_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for r in rows {
        let fields = [
            fmt_sig(r.swept_var, SIG_DIGITS),
            r.eq_label.clone(),
            r.kappa1.clone(),
            r.kappa2.clone(),
            opt_num(r.sigma1),
            opt_num(r.sigma2),
            opt_num(r.theta_tilde),
            opt_num(r.w1),
            opt_num(r.w2),
            r.regime.clone(),
            r.flags.join(";"),
        ];
        out.push_str(&csv_line(&fields));
        out.push('\n');
    }
    out
}

fn json_num(x: Option<f64>) -> serde_json::Value {
    match x {
        Some(v) if v.is_finite() => serde_json::json!(round_sig(v, SIG_DIGITS)),
        _ => serde_json::Value::Null,
    }
}

pub fn sweep_row_to_json(r: &SweepRow) -> serde_json::Value {
    serde_json::json!({
        "swept_var": round_sig(r.swept_var, SIG_DIGITS),
        "eq_label": r.eq_label,
        "kappa1": r.kappa1,
        "kappa2": r.kappa2,
        "sigma1": json_num(r.sigma1),
        "sigma2": json_num(r.sigma2),
        "theta_tilde": json_num(r.theta_tilde),
        "W1": json_num(r.w1),
        "W2": json_num(r.w2),
        "regime": r.regime,
        "flags": r.flags,
    })
}

pub fn sweep_rows_to_json(rows: &[SweepRow]) -> String {
    let arr: Vec<_> = rows.iter().map(sweep_row_to_json).collect();
    to_pretty_json(arr)
}

pub const PSI_MAP_HEADER: &str = "psi1,psi2,regime,boundary";

pub const COST_MAP_HEADER: &str = "c2_rmb_per_gb,c1_rmb_per_gb,eq_label,mode,flags";

pub fn map_rows_to_csv(map: &MapRows) -> String {
    match map {
        MapRows::Psi(rows) => {
            let mut out = String::from(PSI_MAP_HEADER);
            out.push('\n');
            for r in rows {
                let fields = [
                    fmt_sig(r.psi1, SIG_DIGITS),
                    fmt_sig(r.psi2, SIG_DIGITS),
                    r.regime.clone(),
                    if r.matched == 1 { String::new() } else { format!("matched={}", r.matched) },
                ];
                out.push_str(&csv_line(&fields));
                out.push('\n');
            }
            out
        }
        MapRows::Cost(rows) => {
            let mut out = String::from(COST_MAP_HEADER);
            out.push('\n');
            for r in rows {
                let fields = [
                    fmt_sig(r.c2_raw, SIG_DIGITS),
                    fmt_sig(r.c1_raw, SIG_DIGITS),
                    r.eq_label.clone(),
                    r.mode.clone(),
                    r.flags.join(";"),
                ];
                out.push_str(&csv_line(&fields));
                out.push('\n');
            }
            out
        }
    }
}

pub fn map_rows_to_json(map: &MapRows) -> String {
    match map {
        MapRows::Psi(rows) => to_pretty_json(
            rows.iter()
                .map(|r| {
                    serde_json::json!({
                        "psi1": round_sig(r.psi1, SIG_DIGITS),
                        "psi2": round_sig(r.psi2, SIG_DIGITS),
                        "regime": r.regime,
                        "matched": r.matched,
                    })
                })
                .collect(),
        ),
        MapRows::Cost(rows) => to_pretty_json(
            rows.iter()
                .map(|r| {
                    serde_json::json!({
                        "c2_rmb_per_gb": round_sig(r.c2_raw, SIG_DIGITS),
                        "c1_rmb_per_gb": round_sig(r.c1_raw, SIG_DIGITS),
                        "eq_label": r.eq_label,
                        "mode": r.mode,
                        "flags": r.flags,
                    })
                })
                .collect(),
        ),
    }
}

fn to_pretty_json(arr: Vec<serde_json::Value>) -> String {
    let mut out =
        serde_json::to_string_pretty(&serde_json::Value::Array(arr)).expect("serialization");
    out.push('\n');
    out
}
