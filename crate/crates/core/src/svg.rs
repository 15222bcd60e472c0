//! Minimal SVG figures: peel scatter plots, magnitude curves, path maps.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 480.0;
const PAD: f64 = 40.0;

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn fit(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Frame {
        let (x0, x1) = bounds(xs);
        let (y0, y1) = bounds(ys);
        Frame { x0, x1, y0, y1 }
    }

    fn x(&self, v: f64) -> f64 {
        PAD + (v - self.x0) / (self.x1 - self.x0) * (W - 2.0 * PAD)
    }

    fn y(&self, v: f64) -> f64 {
        H - PAD - (v - self.y0) / (self.y1 - self.y0) * (H - 2.0 * PAD)
    }
}

fn bounds(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let margin = 0.05 * (hi - lo);
    (lo - margin, hi + margin)
}

fn header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"22\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">{}</text>\n",
        W / 2.0,
        escape(title)
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Inserts `meta` (escaped) as a `<metadata>` element after the root tag.
pub fn with_metadata(svg: &str, meta: &str) -> String {
    match svg.split_once('\n') {
        Some((root, rest)) => format!("{root}\n<metadata>{}</metadata>\n{rest}", escape(meta)),
        None => svg.to_owned(),
    }
}

/// Points in black, weighted points as red circles with radius
/// proportional to weight.
pub fn peel_scatter(points: &[[f64; 2]], weights: &[f64], title: &str) -> String {
    let f = Frame::fit(points.iter().map(|p| p[0]), points.iter().map(|p| p[1]));
    let max_w = weights.iter().copied().fold(0.0, f64::max);
    let mut s = header(title);
    for p in points {
        let _ = writeln!(s, "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"1.5\" fill=\"black\"/>", f.x(p[0]), f.y(p[1]));
    }
    for (p, &w) in points.iter().zip(weights) {
        if w > 0.0 && max_w > 0.0 {
            let r = 2.0 + 18.0 * w / max_w;
            let _ = writeln!(
                s,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"{r:.2}\" fill=\"none\" stroke=\"red\" stroke-width=\"1.2\"/>",
                f.x(p[0]),
                f.y(p[1])
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Magnitude against `log₁₀ t`; missing points break the line.
pub fn magnitude_curve(ts: &[f64], mags: &[Option<f64>], title: &str) -> String {
    let logs: Vec<f64> = ts.iter().map(|t| t.log10()).collect();
    let f = Frame::fit(logs.iter().copied(), mags.iter().flatten().copied());
    let mut s = header(title);
    let mut segment = String::new();
    let flush = |seg: &mut String, s: &mut String| {
        if !seg.is_empty() {
            let _ = writeln!(s, "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"{}\"/>", seg.trim_end());
            seg.clear();
        }
    };
    for (x, m) in logs.iter().zip(mags) {
        match m {
            Some(m) => {
                let _ = write!(segment, "{:.2},{:.2} ", f.x(*x), f.y(*m));
            }
            None => flush(&mut segment, &mut s),
        }
    }
    flush(&mut segment, &mut s);
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">log10 t</text>",
        W / 2.0,
        H - 8.0
    );
    s.push_str("</svg>\n");
    s
}

/// Nodes as dots; each path as a polyline with opacity and width scaled by
/// its relative weighting.
pub fn path_map(nodes: &[[f64; 2]], paths: &[(Vec<usize>, f64)], title: &str) -> String {
    let f = Frame::fit(nodes.iter().map(|p| p[0]), nodes.iter().map(|p| p[1]));
    let mut s = header(title);
    for p in nodes {
        let _ = writeln!(s, "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2\" fill=\"gray\"/>", f.x(p[0]), f.y(p[1]));
    }
    for (seq, rel) in paths {
        let pts: Vec<String> = seq
            .iter()
            .map(|&i| format!("{:.2},{:.2}", f.x(nodes[i][0]), f.y(nodes[i][1])))
            .collect();
        let _ = writeln!(
            s,
            "<polyline fill=\"none\" stroke=\"crimson\" stroke-opacity=\"{:.3}\" stroke-width=\"{:.2}\" points=\"{}\"/>",
            0.15 + 0.85 * rel,
            0.5 + 3.0 * rel,
            pts.join(" ")
        );
    }
    s.push_str("</svg>\n");
    s
}
