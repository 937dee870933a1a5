//! Seeded generators for property suites.

use rand::seq::SliceRandom;
pub use rand::Rng;
pub use rand_chacha::ChaCha8Rng;
pub use rand::SeedableRng;

use crate::geom::{point_segment_distance, Point};
use crate::svg::{assign_ids, parse, Element, ElementId, GroupMarker, LayerRole, SvgDocument};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

const LEAVES: [&str; 5] = ["rect", "circle", "path", "line", "text"];

fn element(rng: &mut ChaCha8Rng, depth: usize, out: &mut String) {
    if depth < 3 && rng.gen_bool(0.3) {
        out.push_str(&format!("<g class=\"g{}\">", rng.gen_range(0..9)));
        for _ in 0..rng.gen_range(1..5) {
            if rng.gen_bool(0.3) {
                out.push_str("\n  ");
            }
            element(rng, depth + 1, out);
        }
        out.push_str("</g>");
        return;
    }
    let tag = *LEAVES.choose(rng).expect("non-empty");
    let x = rng.gen_range(-50.0..500.0f64);
    match tag {
        "text" => out.push_str(&format!("<text x='{x:.3}' y=\"{}\">a &amp; b {}</text>", rng.gen_range(0..300), rng.gen::<u16>())),
        "path" => out.push_str(&format!("<path d=\"M{x:.2} 0 L 10,{} z\" fill=\"#{:06x}\"/>", rng.gen_range(0..99), rng.gen_range(0..0xffffff))),
        _ => out.push_str(&format!("<{tag} x=\"{x}\"   width=\"{}\" />", rng.gen_range(1..40))),
    }
}

/// A random, id-assigned SVG with comments, whitespace and nested groups.
pub fn svg_tree(rng: &mut ChaCha8Rng) -> SvgDocument {
    let mut body = String::new();
    for _ in 0..rng.gen_range(1..12) {
        if rng.gen_bool(0.2) {
            body.push_str("<!-- note -->");
        }
        element(rng, 0, &mut body);
        body.push('\n');
    }
    let src = format!("<?xml version=\"1.0\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"500\" height=\"300\">\n{body}</svg>\n");
    assign_ids(&parse(src.as_bytes()).expect("generated SVG parses")).expect("fresh ids")
}

/// Random non-overlapping groups of adjacent siblings.
pub fn marker_groups(rng: &mut ChaCha8Rng, doc: &SvgDocument) -> Vec<GroupMarker> {
    let mut groups = Vec::new();
    fn visit(e: &Element, rng: &mut ChaCha8Rng, groups: &mut Vec<GroupMarker>) {
        let kids: Vec<ElementId> = e.element_children().filter_map(Element::id).collect();
        let mut i = 0;
        while i < kids.len() {
            let len = rng.gen_range(1..=kids.len() - i);
            if rng.gen_bool(0.5) {
                let role = *LayerRole::ALL.choose(rng).expect("non-empty");
                groups.push(GroupMarker::new(role, format!("group {}", groups.len()), kids[i..i + len].to_vec()));
            } else {
                for c in e.element_children().skip(i).take(len) {
                    visit(c, rng, groups);
                }
            }
            i += len;
        }
    }
    visit(&doc.root, rng, &mut groups);
    groups
}

/// A random polyline of 3 to 60 points.
pub fn polyline(rng: &mut ChaCha8Rng) -> Vec<Point> {
    let n = rng.gen_range(3..60);
    let (mut x, mut y) = (0.0, 0.0);
    (0..n)
        .map(|_| {
            x += rng.gen_range(-20.0..40.0);
            y += rng.gen_range(-30.0..30.0);
            Point::new(x, y)
        })
        .collect()
}

/// Largest distance from a point of `original` to the polyline `simplified`,
/// by exhaustive search.
pub fn hausdorff_to_polyline(original: &[Point], simplified: &[Point]) -> f64 {
    original
        .iter()
        .map(|p| match simplified {
            [only] => p.dist(*only),
            _ => simplified.windows(2).map(|w| point_segment_distance(*p, w[0], w[1])).fold(f64::INFINITY, f64::min),
        })
        .fold(0.0, f64::max)
}

/// A decimal literal such as `-12.3456` or `7`.
pub fn decimal(rng: &mut ChaCha8Rng) -> String {
    let sign = if rng.gen_bool(0.4) { "-" } else { "" };
    let int = rng.gen_range(0..100_000u32);
    match rng.gen_range(0..6u32) {
        0 => format!("{sign}{int}"),
        places => {
            let places = places + rng.gen_range(0..4);
            let frac: String = (0..places).map(|_| char::from(b'0' + rng.gen_range(0..10u8))).collect();
            // bias towards exact midpoints, where rounding rules differ
            let frac = if rng.gen_bool(0.3) && frac.len() >= 3 { format!("{}5", &frac[..2]) } else { frac };
            format!("{sign}{int}.{frac}")
        }
    }
}
