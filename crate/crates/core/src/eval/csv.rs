//! CSV emission for the evaluation protocols: a header row, one row per
//! frame (depth) or per ladder length (odometry), and a closing `aggregate`
//! row.

use crate::eval::depth::{aggregate_depth_metrics, DepthMetrics};
use crate::eval::trajectory::OdometryMetrics;

fn depth_row(label: &str, m: &DepthMetrics) -> String {
    format!(
        "{label},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9}\n",
        m.abs_rel, m.sq_rel, m.rmse, m.rmse_log, m.delta1, m.delta2, m.delta3
    )
}

pub fn depth_metrics_csv(rows: &[(String, DepthMetrics)]) -> String {
    let mut out = String::from("frame,abs_rel,sq_rel,rmse,rmse_log,delta1,delta2,delta3\n");
    for (label, m) in rows {
        out.push_str(&depth_row(label, m));
    }
    let metrics: Vec<DepthMetrics> = rows.iter().map(|(_, m)| *m).collect();
    out.push_str(&depth_row("aggregate", &aggregate_depth_metrics(&metrics)));
    out
}

pub fn odometry_csv(m: &OdometryMetrics) -> String {
    let mut out = String::from("length_m,t_err_pct,r_err_deg_per_m,segments\n");
    for b in &m.per_length {
        out.push_str(&format!(
            "{:.1},{:.9},{:.9},{}\n",
            b.length_m, b.t_err_pct, b.r_err_deg_per_m, b.segments
        ));
    }
    out.push_str(&format!(
        "aggregate,{:.9},{:.9},{}\n",
        m.t_err_pct, m.r_err_deg_per_m, m.segments
    ));
    out
}
