//! Molecule renderings for explanations: a seeded force-directed layout,
//! DOT and SVG output with importance shading.

use std::fmt::Write as _;

use cdds_chem::{BondOrder, MolecularGraph};
use cdds_compute::rng;
use rand::Rng;

pub const LAYOUT_SEED: u64 = 0;
pub const LAYOUT_ITERATIONS: usize = 300;
const CANVAS: f64 = 480.0;
const MARGIN: f64 = 32.0;
const RADIUS: f64 = 11.0;

/// Fruchterman–Reingold positions in the unit square, fixed seed and
/// iteration count.
pub fn layout(g: &MolecularGraph) -> Vec<(f64, f64)> {
    let n = g.num_atoms();
    let mut r = rng::stream(LAYOUT_SEED, "layout");
    let mut pos: Vec<(f64, f64)> = (0..n).map(|_| (r.random::<f64>(), r.random::<f64>())).collect();
    if n < 2 {
        return vec![(0.5, 0.5); n];
    }
    let k = (1.0 / n as f64).sqrt();
    for it in 0..LAYOUT_ITERATIONS {
        let temp = 0.1 * (1.0 - it as f64 / LAYOUT_ITERATIONS as f64);
        let mut disp = vec![(0.0, 0.0); n];
        for i in 0..n {
            for j in i + 1..n {
                let (dx, dy) = (pos[i].0 - pos[j].0, pos[i].1 - pos[j].1);
                let d = (dx * dx + dy * dy).sqrt().max(1e-6);
                let f = k * k / d;
                disp[i].0 += dx / d * f;
                disp[i].1 += dy / d * f;
                disp[j].0 -= dx / d * f;
                disp[j].1 -= dy / d * f;
            }
        }
        for b in &g.bonds {
            let (i, j) = (b.begin, b.end);
            let (dx, dy) = (pos[i].0 - pos[j].0, pos[i].1 - pos[j].1);
            let d = (dx * dx + dy * dy).sqrt().max(1e-6);
            let f = d * d / k;
            disp[i].0 -= dx / d * f;
            disp[i].1 -= dy / d * f;
            disp[j].0 += dx / d * f;
            disp[j].1 += dy / d * f;
        }
        for (p, (dx, dy)) in pos.iter_mut().zip(disp) {
            let d = (dx * dx + dy * dy).sqrt().max(1e-12);
            let step = d.min(temp);
            p.0 += dx / d * step;
            p.1 += dy / d * step;
        }
    }
    // Rescale to fill the unit square, keeping aspect ratio.
    let (minx, maxx) = pos.iter().fold((f64::MAX, f64::MIN), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let (miny, maxy) = pos.iter().fold((f64::MAX, f64::MIN), |(a, b), p| (a.min(p.1), b.max(p.1)));
    let span = (maxx - minx).max(maxy - miny).max(1e-9);
    pos.iter().map(|p| ((p.0 - minx) / span, (p.1 - miny) / span)).collect()
}

/// Importances rescaled to [0, 1] within one molecule (0.5 if all equal).
pub fn shades(p: &[f64]) -> Vec<f64> {
    let lo = p.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    p.iter().map(|&x| if hi - lo > 0.0 { (x - lo) / (hi - lo) } else { 0.5 }).collect()
}

/// White → red.
fn color(shade: f64) -> String {
    let c = (255.0 * (1.0 - shade)).round() as u8;
    format!("#ff{c:02x}{c:02x}")
}

fn stroke_width(order: BondOrder) -> f64 {
    match order {
        BondOrder::Single => 2.0,
        BondOrder::Aromatic => 3.0,
        BondOrder::Double => 4.5,
        BondOrder::Triple => 7.0,
    }
}

pub fn dot(name: &str, g: &MolecularGraph, p: &[f64], threshold: f64) -> String {
    let sh = shades(p);
    let mut s = String::new();
    let _ = writeln!(s, "// atom fill: importance rescaled per molecule (min white, max red)");
    let _ = writeln!(s, "// dashed green outline: importance >= {threshold}");
    let _ = writeln!(s, "graph \"{name}\" {{");
    let _ = writeln!(s, "  node [shape=circle, style=filled, fontsize=10];");
    for (i, a) in g.atoms.iter().enumerate() {
        let outline = if p[i] >= threshold { ", color=\"#00a000\", penwidth=2, style=\"filled,dashed\"" } else { "" };
        let _ = writeln!(
            s,
            "  a{i} [label=\"{}{i}\", fillcolor=\"{}\", tooltip=\"p={:.4}\"{outline}];",
            a.symbol(),
            color(sh[i]),
            p[i]
        );
    }
    for b in &g.bonds {
        let _ = writeln!(s, "  a{} -- a{} [penwidth={}];", b.begin, b.end, stroke_width(b.order) / 2.0);
    }
    s.push_str("}\n");
    s
}

pub fn svg(name: &str, g: &MolecularGraph, p: &[f64], threshold: f64) -> String {
    let sh = shades(p);
    let span = CANVAS - 2.0 * MARGIN;
    let xy: Vec<(f64, f64)> = layout(g).into_iter().map(|(x, y)| (MARGIN + x * span, MARGIN + y * span)).collect();
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{CANVAS}\" height=\"{CANVAS}\" viewBox=\"0 0 {CANVAS} {CANVAS}\">"
    );
    let _ = writeln!(s, "<!-- {name}: fill = importance rescaled per molecule; dashed green box = importance >= {threshold} -->");
    let _ = writeln!(s, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    for b in &g.bonds {
        let (a, c) = (xy[b.begin], xy[b.end]);
        let _ = writeln!(
            s,
            "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#404040\" stroke-width=\"{}\"/>",
            a.0,
            a.1,
            c.0,
            c.1,
            stroke_width(b.order)
        );
    }
    for (i, a) in g.atoms.iter().enumerate() {
        let (x, y) = xy[i];
        if p[i] >= threshold {
            let h = RADIUS + 4.0;
            let _ = writeln!(
                s,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"#00a000\" stroke-width=\"2\" stroke-dasharray=\"4 3\"/>",
                x - h,
                y - h,
                2.0 * h,
                2.0 * h
            );
        }
        let _ = writeln!(
            s,
            "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"{RADIUS}\" fill=\"{}\" stroke=\"#202020\"><title>{}{i} p={:.4}</title></circle>",
            color(sh[i]),
            a.symbol(),
            p[i]
        );
        let _ = writeln!(
            s,
            "<text x=\"{x:.2}\" y=\"{:.2}\" font-size=\"10\" text-anchor=\"middle\" font-family=\"sans-serif\">{}</text>",
            y + 3.5,
            a.symbol()
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shading_is_per_molecule() {
        let s = shades(&[0.2, 0.4, 0.3]);
        assert_eq!((s[0], s[1]), (0.0, 1.0));
        assert!((s[2] - 0.5).abs() < 1e-12);
        assert_eq!(shades(&[0.3, 0.3]), vec![0.5, 0.5]);
        assert_eq!(color(0.0), "#ffffff");
        assert_eq!(color(1.0), "#ff0000");
    }

    #[test]
    fn layout_spreads_atoms_and_keeps_bonds_short() {
        let g = cdds_chem::parse_smiles("c1ccccc1CCO").unwrap();
        let pos = layout(&g);
        assert_eq!(pos, layout(&g));
        let dist = |i: usize, j: usize| ((pos[i].0 - pos[j].0).powi(2) + (pos[i].1 - pos[j].1).powi(2)).sqrt();
        for i in 0..pos.len() {
            for j in i + 1..pos.len() {
                assert!(dist(i, j) > 0.02, "atoms {i} and {j} overlap");
            }
        }
        let bonded: f64 = g.bonds.iter().map(|b| dist(b.begin, b.end)).sum::<f64>() / g.num_bonds() as f64;
        assert!(bonded < dist(0, 8));
    }

    #[test]
    fn threshold_marks_atoms() {
        let g = cdds_chem::parse_smiles("CCO").unwrap();
        let svg = svg("x", &g, &[0.9, 0.1, 0.7], 0.7);
        assert_eq!(svg.matches("stroke-dasharray").count(), 2);
        let dot = dot("x", &g, &[0.9, 0.1, 0.7], 0.7);
        assert_eq!(dot.matches("dashed").count(), 2 + 1);
    }
}
