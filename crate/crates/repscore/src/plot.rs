//! Self-contained SVG line plots for evaluation curves: no stylesheet, no
//! script, fixed canvas, deterministic output bytes for identical input.

use crate::eval::{CurveKind, CurveResult};

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 360.0;
const MARGIN_LEFT: f64 = 56.0;
const MARGIN_RIGHT: f64 = 16.0;
const MARGIN_TOP: f64 = 36.0;
const MARGIN_BOTTOM: f64 = 44.0;

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

/// Map a unit-square point into canvas pixels.
fn to_canvas(x: f64, y: f64) -> (f64, f64) {
    let px = MARGIN_LEFT + x * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT);
    let py = HEIGHT - MARGIN_BOTTOM - y * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM);
    (px, py)
}

/// Render one curve as a standalone SVG document.
///
/// Both curve kinds live on the unit square; the axes carry 0, 0.5, and 1
/// ticks. ROC plots include the dashed chance diagonal.
pub fn curve_svg(curve: &CurveResult) -> String {
    let (title, x_label, y_label) = match curve.kind {
        CurveKind::Roc => ("ROC", "false positive rate", "true positive rate"),
        CurveKind::Pr => ("precision-recall", "recall", "precision"),
    };
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str(&format!(
        "  <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"22\" font-family=\"sans-serif\" font-size=\"14\" \
         text-anchor=\"middle\">{title} (area {:.4}, {}+ / {}-)</text>\n",
        WIDTH / 2.0,
        curve.area,
        curve.n_positive,
        curve.n_negative
    ));

    // axes
    let (x0, y0) = to_canvas(0.0, 0.0);
    let (x1, _) = to_canvas(1.0, 0.0);
    let (_, y1) = to_canvas(0.0, 1.0);
    svg.push_str(&format!(
        "  <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        fmt(x0),
        fmt(y0),
        fmt(x1),
        fmt(y0)
    ));
    svg.push_str(&format!(
        "  <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        fmt(x0),
        fmt(y0),
        fmt(x0),
        fmt(y1)
    ));
    for tick in [0.0, 0.5, 1.0] {
        let (tx, ty) = to_canvas(tick, 0.0);
        svg.push_str(&format!(
            "  <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
            fmt(tx),
            fmt(ty),
            fmt(tx),
            fmt(ty + 5.0)
        ));
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"middle\">{tick}</text>\n",
            fmt(tx),
            fmt(ty + 18.0)
        ));
        let (ux, uy) = to_canvas(0.0, tick);
        svg.push_str(&format!(
            "  <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
            fmt(ux - 5.0),
            fmt(uy),
            fmt(ux),
            fmt(uy)
        ));
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"end\">{tick}</text>\n",
            fmt(ux - 8.0),
            fmt(uy + 4.0)
        ));
    }
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" \
         text-anchor=\"middle\">{x_label}</text>\n",
        fmt((x0 + x1) / 2.0),
        fmt(HEIGHT - 8.0)
    ));
    svg.push_str(&format!(
        "  <text x=\"14\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" \
         text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">{y_label}</text>\n",
        fmt((y0 + y1) / 2.0),
        fmt((y0 + y1) / 2.0)
    ));

    if curve.kind == CurveKind::Roc {
        let (dx0, dy0) = to_canvas(0.0, 0.0);
        let (dx1, dy1) = to_canvas(1.0, 1.0);
        svg.push_str(&format!(
            "  <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"gray\" \
             stroke-dasharray=\"4 3\"/>\n",
            fmt(dx0),
            fmt(dy0),
            fmt(dx1),
            fmt(dy1)
        ));
    }

    let coords: Vec<String> = curve
        .points
        .iter()
        .map(|&(x, y)| {
            let (px, py) = to_canvas(x, y);
            format!("{},{}", fmt(px), fmt(py))
        })
        .collect();
    svg.push_str(&format!(
        "  <polyline points=\"{}\" fill=\"none\" stroke=\"#1f6fb2\" stroke-width=\"1.5\"/>\n",
        coords.join(" ")
    ));
    svg.push_str("</svg>\n");
    svg
}
