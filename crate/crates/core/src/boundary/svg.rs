//! Self-contained SVG heat map of a [`ConfidenceSlice`].

use std::fmt::Write;

use super::slice::{contour_polylines, ConfidenceSlice};
use crate::sampling::ParameterBox;
use crate::scenario::Outcome;

const WIDTH: f64 = 560.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 90.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 60.0;

/// Blue (p = 0) through white (p = 0.5) to red (p = 1).
fn color(p: f64) -> String {
    let p = p.clamp(0.0, 1.0);
    let (r, g, b) = if p < 0.5 {
        let t = p / 0.5;
        (
            (33.0 + t * (255.0 - 33.0)) as u8,
            (102.0 + t * (255.0 - 102.0)) as u8,
            (172.0 + t * (255.0 - 172.0)) as u8,
        )
    } else {
        let t = (p - 0.5) / 0.5;
        (
            (255.0 + t * (178.0 - 255.0)) as u8,
            (255.0 + t * (24.0 - 255.0)) as u8,
            (255.0 + t * (43.0 - 255.0)) as u8,
        )
    };
    format!("#{r:02x}{g:02x}{b:02x}")
}

fn fmt_num(v: f64) -> String {
    let s = format!("{v:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Renders the probability grid, the 0.5 contour and the overlay samples
/// (filled = collision, open = no collision).
pub fn render_slice(slice: &ConfidenceSlice, bounds: &ParameterBox) -> String {
    let (dx, dy) = slice.free_dims;
    let xd = &bounds.dims()[dx];
    let yd = &bounds.dims()[dy];
    let fd = &bounds.dims()[slice.fixed_dim];
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |v: f64| MARGIN_LEFT + (v - xd.lower) / xd.width() * plot_w;
    let sy = |v: f64| MARGIN_TOP + plot_h - (v - yd.lower) / yd.width() * plot_h;

    let nx = slice.x_values.len();
    let ny = slice.y_values.len();
    let cell_w = plot_w / (nx - 1) as f64;
    let cell_h = plot_h / (ny - 1) as f64;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">P(collision) at {} = {} {} (data within ±{} {})</text>"#,
        WIDTH / 2.0,
        fd.name,
        fmt_num(slice.fixed_value),
        fd.unit,
        fmt_num(slice.band),
        fd.unit
    );

    // Heat map: one rect per grid node, centred on it and clipped to the plot.
    let _ = writeln!(out, r#"<g shape-rendering="crispEdges">"#);
    for (row, yv) in slice.y_values.iter().enumerate() {
        for (col, xv) in slice.x_values.iter().enumerate() {
            let x0 = (sx(*xv) - cell_w / 2.0).max(MARGIN_LEFT);
            let x1 = (sx(*xv) + cell_w / 2.0).min(MARGIN_LEFT + plot_w);
            let y0 = (sy(*yv) - cell_h / 2.0).max(MARGIN_TOP);
            let y1 = (sy(*yv) + cell_h / 2.0).min(MARGIN_TOP + plot_h);
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                x0,
                y0,
                x1 - x0,
                y1 - y0,
                color(slice.probs[row][col])
            );
        }
    }
    let _ = writeln!(out, "</g>");

    for line in contour_polylines(&slice.probs, 0.5) {
        let pts: Vec<String> = line
            .iter()
            .map(|&(c, r)| {
                let xv = xd.lower + c / (nx - 1) as f64 * xd.width();
                let yv = yd.lower + r / (ny - 1) as f64 * yd.width();
                format!("{:.2},{:.2}", sx(xv), sy(yv))
            })
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="black" stroke-width="2"/>"#,
            pts.join(" ")
        );
    }

    for s in &slice.overlay {
        let a = s.params.as_array();
        let fill = match s.outcome {
            Outcome::Collision => "black",
            Outcome::NoCollision => "none",
        };
        let _ = writeln!(
            out,
            r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{fill}" stroke="black" stroke-width="1.2"/>"#,
            sx(a[dx]),
            sy(a[dy])
        );
    }

    // Axes and ticks.
    let _ = writeln!(
        out,
        r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    for i in 0..=5 {
        let xv = xd.lower + xd.width() * i as f64 / 5.0;
        let yv = yd.lower + yd.width() * i as f64 / 5.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            sx(xv),
            MARGIN_TOP + plot_h + 18.0,
            fmt_num(xv)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            MARGIN_LEFT - 6.0,
            sy(yv) + 4.0,
            fmt_num(yv)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{} [{}]</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 15.0,
        xd.name,
        xd.unit
    );
    let _ = writeln!(
        out,
        r#"<text transform="translate(18 {:.2}) rotate(-90)" text-anchor="middle">{} [{}]</text>"#,
        MARGIN_TOP + plot_h / 2.0,
        yd.name,
        yd.unit
    );

    // Colour bar.
    let bar_x = WIDTH - MARGIN_RIGHT + 25.0;
    for i in 0..50 {
        let p = 1.0 - i as f64 / 49.0;
        let _ = writeln!(
            out,
            r#"<rect x="{bar_x}" y="{:.2}" width="16" height="{:.2}" fill="{}"/>"#,
            MARGIN_TOP + plot_h * i as f64 / 50.0,
            plot_h / 50.0 + 0.5,
            color(p)
        );
    }
    for (p, label) in [(1.0, "1"), (0.5, "0.5"), (0.0, "0")] {
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}">{label}</text>"#,
            bar_x + 20.0,
            MARGIN_TOP + plot_h * (1.0 - p) + 4.0
        );
    }
    let _ = writeln!(out, "</svg>");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn color_endpoints() {
        assert_eq!(color(0.5), "#ffffff");
        assert_eq!(color(0.0), "#2166ac");
        assert_eq!(color(1.0), "#b2182b");
    }
}
