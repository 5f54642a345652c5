//! Text SVG convergence plots: objective against iteration on a log scale.

use std::fmt::Write as _;

use crate::Error;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 40.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

/// Smallest value drawn; nonpositive objectives are clamped to it.
const FLOOR: f64 = 1e-16;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// One polyline per `(label, f_0, f_1, ...)` trace, plus a legend.
pub fn convergence_svg(traces: &[(String, Vec<f64>)]) -> Result<String, Error> {
    if traces.is_empty() || traces.iter().any(|(_, t)| t.is_empty()) {
        return Err(Error::Format("plot needs at least one nonempty trace".into()));
    }
    let logs: Vec<Vec<f64>> = traces
        .iter()
        .map(|(_, t)| t.iter().map(|v| if v.is_finite() { v.max(FLOOR).log10() } else { f64::NAN }).collect())
        .collect();
    let finite = logs.iter().flatten().filter(|v| v.is_finite());
    let (mut lo, mut hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        lo -= 0.5;
        hi += 0.5;
    }
    let kmax = traces.iter().map(|(_, t)| t.len() - 1).max().unwrap_or(0).max(1) as f64;
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |k: usize| LEFT + pw * k as f64 / kmax;
    let py = |l: f64| TOP + ph * (hi - l) / (hi - lo);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for d in (lo.ceil() as i64)..=(hi.floor() as i64) {
        let y = py(d as f64);
        let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/>"##, LEFT + pw);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">1e{d}</text>"#, LEFT - 6.0, y + 4.0);
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">iteration k (max {kmax})</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 10.0
    );
    for (idx, ((label, _), log)) in traces.iter().zip(&logs).enumerate() {
        let color = COLORS[idx % COLORS.len()];
        let points: Vec<String> = log
            .iter()
            .enumerate()
            .filter(|(_, l)| l.is_finite())
            .map(|(k, &l)| format!("{:.2},{:.2}", px(k), py(l)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        );
        let ly = TOP + 16.0 + 18.0 * idx as f64;
        let lx = WIDTH - RIGHT + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
            lx + 20.0
        );
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, escape(label));
    }
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn polyline_ys(svg: &str) -> Vec<Vec<f64>> {
        svg.lines()
            .filter(|l| l.starts_with("<polyline"))
            .map(|l| {
                let pts = l.split("points=\"").nth(1).unwrap().trim_end_matches("\"/>");
                pts.split(' ').map(|p| p.split(',').nth(1).unwrap().parse().unwrap()).collect()
            })
            .collect()
    }

    #[test]
    fn constant_trace_is_horizontal() {
        let svg = convergence_svg(&[("a".into(), vec![2.0; 5])]).unwrap();
        let ys = polyline_ys(&svg);
        assert_eq!(ys.len(), 1);
        assert!(ys[0].windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn two_traces_two_legends() {
        let svg = convergence_svg(&[("MQN-M1".into(), vec![1.0, 0.1]), ("MG-M1".into(), vec![1.0, 0.5, 0.2])]).unwrap();
        assert_eq!(polyline_ys(&svg).len(), 2);
        assert!(svg.contains(">MQN-M1</text>") && svg.contains(">MG-M1</text>"));
    }

    #[test]
    fn decreasing_trace_moves_down() {
        let svg = convergence_svg(&[("a".into(), vec![10.0, 3.0, 3.0, 0.01, 0.0])]).unwrap();
        let ys = &polyline_ys(&svg)[0];
        assert!(ys.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn rejects_empty() {
        assert!(convergence_svg(&[]).is_err());
        assert!(convergence_svg(&[("a".into(), vec![])]).is_err());
    }
}
