use std::fmt::Write;

const PALETTE: [&str; 8] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];
const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 48.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Standalone scatter plot of 2D points coloured by cluster, with a legend.
pub fn cluster_scatter(title: &str, points: &[(String, [f64; 2], usize)]) -> String {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for (_, p, _) in points {
        for c in 0..2 {
            lo[c] = lo[c].min(p[c]);
            hi[c] = hi[c].max(p[c]);
        }
    }
    let span = |c: usize| if hi[c] > lo[c] { hi[c] - lo[c] } else { 1.0 };
    let plot_w = WIDTH - 2.0 * MARGIN - 120.0;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let sx = |x: f64| MARGIN + (x - lo[0]) / span(0) * plot_w;
    let sy = |y: f64| HEIGHT - MARGIN - (y - lo[1]) / span(1) * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="28" font-size="16" text-anchor="middle">{}</text>"#, WIDTH / 2.0, escape(title));
    let _ = writeln!(
        s,
        r##"<rect x="{MARGIN}" y="{MARGIN}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#444" stroke-width="1"/>"##
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">t-SNE 1</text>"#, MARGIN + plot_w / 2.0, HEIGHT - 14.0);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 16 {})">t-SNE 2</text>"#,
        MARGIN + plot_h / 2.0,
        MARGIN + plot_h / 2.0
    );
    for (id, p, cluster) in points {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="5" fill="{}" fill-opacity="0.85"><title>{} (cluster {})</title></circle>"#,
            sx(p[0]),
            sy(p[1]),
            PALETTE[cluster % PALETTE.len()],
            escape(id),
            cluster + 1
        );
    }
    let mut clusters: Vec<usize> = points.iter().map(|p| p.2).collect();
    clusters.sort_unstable();
    clusters.dedup();
    let lx = WIDTH - MARGIN - 100.0;
    for (i, c) in clusters.iter().enumerate() {
        let y = MARGIN + 12.0 + i as f64 * 20.0;
        let _ = writeln!(s, r#"<circle cx="{lx}" cy="{y}" r="5" fill="{}"/>"#, PALETTE[c % PALETTE.len()]);
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="12">Cluster {}</text>"#, lx + 12.0, y + 4.0, c + 1);
    }
    s.push_str("</svg>\n");
    s
}
