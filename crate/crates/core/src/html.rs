//! Static HTML views of explanations and evaluation reports.

use std::fmt::Write;

use crate::pipeline::{EvalReport, ExplanationOutput};

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

/// Diverging scale on [-1, 1]: blue for positive, white at 0, red for negative.
pub fn psi_color(psi: f64) -> String {
    let t = if psi.is_finite() { psi.clamp(-1.0, 1.0) } else { 0.0 };
    let fade = (255.0 * (1.0 - t.abs())).round() as u8;
    if t >= 0.0 {
        format!("#{fade:02x}{fade:02x}ff")
    } else {
        format!("#ff{fade:02x}{fade:02x}")
    }
}

const STYLE: &str = "body{font-family:sans-serif;max-width:60em;margin:2em auto;line-height:1.6}\
.u{border-radius:3px;padding:0 1px}table{border-collapse:collapse}td,th{border:1px solid #ccc;padding:2px 6px}\
pre{white-space:pre-wrap}";

/// Document text with each scored unit shaded by its normalized score.
pub fn explanation_html(out: &ExplanationOutput) -> String {
    let chars: Vec<char> = out.document.chars().collect();
    let mut spans: Vec<(usize, usize, f64, f64, usize)> = Vec::new();
    for (k, id) in out.result.unit_ids.iter().enumerate() {
        if let Some(u) = out.units.iter().find(|u| u.id == *id) {
            spans.push((u.span.start, u.span.end, out.result.scores[k], out.result.normalized[k], *id));
        }
    }
    spans.sort_by_key(|s| (s.0, s.1));

    let mut body = String::new();
    let mut pos = 0;
    for (start, end, xi, psi, id) in spans {
        if start < pos || end > chars.len() {
            continue;
        }
        body.push_str(&escape(&chars[pos..start].iter().collect::<String>()));
        let text: String = chars[start..end].iter().collect();
        let _ = write!(
            body,
            "<span class=\"u\" style=\"background:{}\" title=\"unit {id}: score {xi:.6}, normalized {psi:.3}\">{}</span>",
            psi_color(psi),
            escape(&text)
        );
        pos = end;
    }
    body.push_str(&escape(&chars[pos..].iter().collect::<String>()));

    let mut html = String::new();
    let _ = write!(
        html,
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Attribution</title><style>{STYLE}</style></head><body>\n\
         <h1>Attribution</h1>\n<p>Method <b>{}</b>, model <b>{}</b>, {} model calls.</p>\n\
         <h2>Input</h2>\n<pre>{body}</pre>\n<h2>Output</h2>\n<pre>{}</pre>\n",
        escape(&out.method()),
        escape(&out.model),
        out.ledger.model_calls(),
        escape(&out.result.target_output)
    );
    if let Some(se) = &out.self_explanation {
        let _ = write!(html, "<h2>Model reply</h2>\n<pre>{}</pre>\n", escape(&se.reply));
    }
    html.push_str("</body></html>\n");
    html
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

fn curves_svg(report: &EvalReport) -> String {
    let (w, h, pad) = (520.0, 320.0, 40.0);
    let mut lo: f64 = 0.0;
    let mut hi: f64 = 0.0;
    for m in &report.methods {
        for (y, s) in m.curve.mean.iter().zip(&m.curve.stderr) {
            lo = lo.min(y - s);
            hi = hi.max(y + s);
        }
    }
    if hi - lo <= 0.0 {
        hi = lo + 1.0;
    }
    let sx = |x: f64| pad + (w - 2.0 * pad) * x / report.cutoff;
    let sy = |y: f64| h - pad - (h - 2.0 * pad) * (y - lo) / (hi - lo);
    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\
         <line x1=\"{pad}\" y1=\"{y0:.1}\" x2=\"{x1:.1}\" y2=\"{y0:.1}\" stroke=\"black\"/>\
         <line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{yb:.1}\" stroke=\"black\"/>\
         <text x=\"{x1:.1}\" y=\"{yt:.1}\" text-anchor=\"end\" font-size=\"11\">fraction removed ({})</text>\
         <text x=\"4\" y=\"{pad}\" font-size=\"11\">{hi:.3}</text><text x=\"4\" y=\"{yb:.1}\" font-size=\"11\">{lo:.3}</text>",
        report.cutoff,
        y0 = sy(0.0),
        x1 = w - pad,
        yb = h - pad,
        yt = h - 8.0,
    );
    for (i, m) in report.methods.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = m
            .curve
            .grid
            .iter()
            .zip(&m.curve.mean)
            .map(|(x, y)| format!("{:.1},{:.1}", sx(*x), sy(*y)))
            .collect();
        let _ = write!(
            svg,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\
             <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" fill=\"{color}\">{}</text>",
            pts.join(" "),
            pad + 8.0,
            pad + 14.0 * (i as f64 + 1.0),
            escape(&m.method)
        );
    }
    svg.push_str("</svg>");
    svg
}

fn matrix_table(methods: &[String], m: &[Vec<Option<f64>>]) -> String {
    let mut t = String::from("<table><tr><th></th>");
    for name in methods {
        let _ = write!(t, "<th>{}</th>", escape(name));
    }
    t.push_str("</tr>");
    for (name, row) in methods.iter().zip(m) {
        let _ = write!(t, "<tr><th>{}</th>", escape(name));
        for v in row {
            match v {
                Some(v) => {
                    let _ = write!(t, "<td>{v:.3}</td>");
                }
                None => t.push_str("<td>n/a</td>"),
            }
        }
        t.push_str("</tr>");
    }
    t.push_str("</table>\n");
    t
}

/// Curves, AUPC table and agreement matrices.
pub fn eval_html(report: &EvalReport) -> String {
    let mut html = String::new();
    let _ = write!(
        html,
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Evaluation</title><style>{STYLE}</style></head><body>\n\
         <h1>Perturbation curves</h1>\n<p>Scalarizer <b>{}</b>.</p>\n{}\n\
         <h2>AUPC</h2>\n<table><tr><th>method</th><th>n</th><th>mean</th><th>stderr</th></tr>",
        escape(&report.scalarizer),
        curves_svg(report)
    );
    for m in &report.methods {
        let _ = write!(
            html,
            "<tr><td>{}</td><td>{}</td><td>{:.4}</td><td>{:.4}</td></tr>",
            escape(&m.method),
            m.n_examples,
            m.aupc_mean,
            m.aupc_stderr
        );
    }
    html.push_str("</table>\n");
    if let Some(a) = &report.agreement {
        html.push_str("<h2>Spearman rank correlation</h2>\n");
        html.push_str(&matrix_table(&a.methods, &a.spearman));
        html.push_str("<h2>Cosine similarity</h2>\n");
        html.push_str(&matrix_table(&a.methods, &a.cosine));
    }
    html.push_str("</body></html>\n");
    html
}
