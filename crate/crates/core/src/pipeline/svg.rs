//! Minimal hand-written SVG renderings of the exported plot data. No
//! timestamps or random ids, so reruns are byte-identical.

use std::fmt::Write;

use crate::agreement::ContingencyTable;
use crate::cluster::{ElbowTable, PhaseDistribution};

const PALETTE: [&str; 12] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7",
    "#9c755f", "#bab0ac", "#86bcb6", "#d37295",
];

fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

fn header(w: f64, h: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    )
}

/// Inertia (left axis) and silhouette (right axis) against k.
pub fn elbow(table: &ElbowTable) -> String {
    let (w, h, pad) = (520.0, 320.0, 50.0);
    let mut s = header(w, h);
    let rows = &table.rows;
    let kmin = rows.first().map_or(0, |r| r.k) as f64;
    let kmax = rows.last().map_or(1, |r| r.k) as f64;
    let x = |k: usize| {
        if kmax > kmin {
            pad + (k as f64 - kmin) / (kmax - kmin) * (w - 2.0 * pad)
        } else {
            w / 2.0
        }
    };
    let imax = rows
        .iter()
        .map(|r| r.inertia)
        .fold(0.0, f64::max)
        .max(1e-12);
    let y_in = |v: f64| h - pad - v / imax * (h - 2.0 * pad);
    let y_sil = |v: f64| h - pad - (v + 1.0) / 2.0 * (h - 2.0 * pad);
    let _ = writeln!(
        s,
        "<line x1=\"{pad}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        h - pad,
        w - pad,
        h - pad
    );
    let _ = writeln!(
        s,
        "<line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{}\" stroke=\"black\"/>",
        h - pad
    );
    let _ = writeln!(
        s,
        "<line x1=\"{}\" y1=\"{pad}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        w - pad,
        w - pad,
        h - pad
    );
    for r in rows {
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
            x(r.k),
            h - pad + 16.0,
            r.k
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">k</text>",
        w / 2.0,
        h - 10.0
    );
    let _ = writeln!(
        s,
        "<text x=\"12\" y=\"{pad}\" fill=\"{}\">inertia</text>",
        color(0)
    );
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{pad}\" fill=\"{}\" text-anchor=\"end\">silhouette</text>",
        w - 4.0,
        color(1)
    );
    let pts: Vec<String> = rows
        .iter()
        .map(|r| format!("{:.2},{:.2}", x(r.k), y_in(r.inertia)))
        .collect();
    let _ = writeln!(
        s,
        "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"2\" points=\"{}\"/>",
        color(0),
        pts.join(" ")
    );
    let pts: Vec<String> = rows
        .iter()
        .filter_map(|r| {
            r.silhouette
                .map(|v| format!("{:.2},{:.2}", x(r.k), y_sil(v)))
        })
        .collect();
    let _ = writeln!(s, "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"2\" stroke-dasharray=\"5,3\" points=\"{}\"/>", color(1), pts.join(" "));
    let _ = writeln!(s, "<line x1=\"{0:.2}\" y1=\"{pad}\" x2=\"{0:.2}\" y2=\"{1}\" stroke=\"gray\" stroke-dasharray=\"2,2\"/>", x(table.suggested_k), h - pad);
    s.push_str("</svg>\n");
    s
}

/// One stacked-area panel per cluster: symbol shares across relative-position bins.
pub fn phase(pd: &PhaseDistribution, symbols: &[String]) -> String {
    let clusters = pd.whole_task.len();
    let (w, panel, pad) = (560.0, 160.0, 40.0);
    let h = clusters as f64 * (panel + pad) + pad + 20.0 * symbols.len().div_ceil(6) as f64;
    let mut s = header(w, h);
    let plot_w = w - 2.0 * pad;
    for c in 0..clusters {
        let top = pad + c as f64 * (panel + pad);
        let cells: Vec<_> = pd.cells.iter().filter(|cell| cell.cluster == c).collect();
        let _ = writeln!(
            s,
            "<text x=\"{pad}\" y=\"{:.2}\">cluster {c} (n = {})</text>",
            top - 6.0,
            pd.whole_task[c].n_learners
        );
        let bins = cells.len().max(1);
        let bx = |b: f64| pad + b / bins as f64 * plot_w;
        let mut lower = vec![0.0; bins];
        for sym in 0..pd.n_symbols {
            let upper: Vec<f64> = cells
                .iter()
                .enumerate()
                .map(|(b, cell)| lower[b] + cell.proportions[sym])
                .collect();
            let mut pts = Vec::new();
            for b in 0..bins {
                pts.push(format!(
                    "{:.2},{:.2}",
                    bx(b as f64 + 0.5),
                    top + panel - upper[b] * panel
                ));
            }
            for b in (0..bins).rev() {
                pts.push(format!(
                    "{:.2},{:.2}",
                    bx(b as f64 + 0.5),
                    top + panel - lower[b] * panel
                ));
            }
            let _ = writeln!(
                s,
                "<polygon fill=\"{}\" stroke=\"none\" points=\"{}\"/>",
                color(sym),
                pts.join(" ")
            );
            lower = upper;
        }
        let _ = writeln!(s, "<rect x=\"{pad}\" y=\"{top:.2}\" width=\"{plot_w}\" height=\"{panel}\" fill=\"none\" stroke=\"black\"/>");
    }
    let legend_top = pad + clusters as f64 * (panel + pad);
    for (i, name) in symbols.iter().enumerate() {
        let (lx, ly) = (
            pad + (i % 6) as f64 * 80.0,
            legend_top + (i / 6) as f64 * 20.0,
        );
        let _ = writeln!(
            s,
            "<rect x=\"{lx}\" y=\"{ly}\" width=\"10\" height=\"10\" fill=\"{}\"/>",
            color(i)
        );
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\">{name}</text>",
            lx + 14.0,
            ly + 9.0
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Two columns of nodes (rows of the table left, columns right) joined by
/// bands whose width is proportional to the cell count.
pub fn sankey(t: &ContingencyTable, left: &str, right: &str) -> String {
    let (w, h, pad, node_w, gap) = (520.0, 420.0, 40.0, 18.0, 10.0);
    let mut s = header(w, h);
    let total = t.total().max(1) as f64;
    let rows = t.row_totals();
    let cols = t.col_totals();
    let scale = (h - 2.0 * pad - gap * (rows.len().max(cols.len()) as f64 - 1.0)) / total;
    let place = |sizes: &[u64]| -> Vec<f64> {
        let mut y = pad;
        sizes
            .iter()
            .map(|&n| {
                let top = y;
                y += n as f64 * scale + gap;
                top
            })
            .collect()
    };
    let (ry, cy) = (place(&rows), place(&cols));
    let (lx, rx) = (pad + 60.0, w - pad - 60.0 - node_w);
    let mut row_off = ry.clone();
    let mut col_off = cy.clone();
    for (i, r) in t.counts.iter().enumerate() {
        for (j, &n) in r.iter().enumerate() {
            if n == 0 {
                continue;
            }
            let band = n as f64 * scale;
            let (y0, y1) = (row_off[i] + band / 2.0, col_off[j] + band / 2.0);
            let (x0, x1) = (lx + node_w, rx);
            let mid = (x0 + x1) / 2.0;
            let _ = writeln!(
                s,
                "<path d=\"M{x0:.2},{y0:.2} C{mid:.2},{y0:.2} {mid:.2},{y1:.2} {x1:.2},{y1:.2}\" fill=\"none\" stroke=\"{}\" stroke-opacity=\"0.5\" stroke-width=\"{band:.2}\"><title>{n}</title></path>",
                color(i)
            );
            row_off[i] += band;
            col_off[j] += band;
        }
    }
    for (i, (&y, &n)) in ry.iter().zip(&rows).enumerate() {
        let _ = writeln!(
            s,
            "<rect x=\"{lx}\" y=\"{y:.2}\" width=\"{node_w}\" height=\"{:.2}\" fill=\"{}\"/>",
            n as f64 * scale,
            color(i)
        );
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{:.2}\" text-anchor=\"end\">{left} {} ({n})</text>",
            lx - 4.0,
            y + n as f64 * scale / 2.0 + 4.0,
            t.row_labels[i]
        );
    }
    for (j, (&y, &n)) in cy.iter().zip(&cols).enumerate() {
        let _ = writeln!(
            s,
            "<rect x=\"{rx}\" y=\"{y:.2}\" width=\"{node_w}\" height=\"{:.2}\" fill=\"#888888\"/>",
            n as f64 * scale
        );
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{:.2}\">{right} {} ({n})</text>",
            rx + node_w + 4.0,
            y + n as f64 * scale / 2.0 + 4.0,
            t.col_labels[j]
        );
    }
    s.push_str("</svg>\n");
    s
}
