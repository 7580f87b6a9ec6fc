//! Raster snapshots of the planning state (sent to vision oracles) and SVG
//! figure export.
//!
//! Rendering is a pure function of its inputs: no timestamps, no randomness,
//! no antialiasing.

use std::fmt::Write as _;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::env::{Env, Point2, Rect};
use crate::planner::{PlanResult, Tree};
use crate::vlm_planner::Sector;

pub const DEFAULT_SIZE: u32 = 512;

pub type Rgb = [u8; 3];

pub mod palette {
    use super::Rgb;
    pub const BACKGROUND: Rgb = [255, 255, 255];
    pub const OBSTACLE: Rgb = [64, 64, 64];
    pub const START: Rgb = [220, 0, 0];
    pub const GOAL: Rgb = [0, 170, 0];
    pub const GOAL_CENTER: Rgb = [0, 90, 0];
    pub const EDGE: Rgb = [150, 190, 255];
    pub const LEAF: Rgb = [0, 0, 255];
    pub const SECTOR: Rgb = [255, 220, 0];
}

const LEAF_RADIUS_PX: f64 = 2.0;
const START_RADIUS_PX: f64 = 4.0;
const GOAL_CENTER_RADIUS_PX: f64 = 2.5;
const HIGHLIGHT_OUTER_PX: f64 = 7.0;
const HIGHLIGHT_INNER_PX: f64 = 4.5;
const SECTOR_ALPHA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Background,
    Obstacle,
    Start,
    Goal,
    GoalCenter,
    TreeEdge,
    Leaf,
    SelectedLeaf,
    Sector,
}

impl Role {
    pub fn describe(self) -> &'static str {
        match self {
            Role::Background => "free space",
            Role::Obstacle => "obstacles (fire fronts) that must be avoided",
            Role::Start => "start position (filled dot)",
            Role::Goal => "goal region (filled rectangle)",
            Role::GoalCenter => "center of the goal region (dot)",
            Role::TreeEdge => "edges of the exploration tree (thin lines)",
            Role::Leaf => "leaf nodes of the exploration tree (small dots)",
            Role::SelectedLeaf => "the selected leaf node you must advise (ring)",
            Role::Sector => "previous sampling sector (translucent wedge)",
        }
    }
}

/// Role → color mapping used by the renderer and quoted in prompts.
pub fn legend() -> Vec<(Role, Rgb)> {
    use palette::*;
    vec![
        (Role::Background, BACKGROUND),
        (Role::Obstacle, OBSTACLE),
        (Role::Start, START),
        (Role::Goal, GOAL),
        (Role::GoalCenter, GOAL_CENTER),
        (Role::TreeEdge, EDGE),
        (Role::Leaf, LEAF),
        (Role::SelectedLeaf, LEAF),
        (Role::Sector, SECTOR),
    ]
}

pub fn color_name(c: Rgb) -> &'static str {
    use palette::*;
    match c {
        BACKGROUND => "white",
        OBSTACLE => "dark gray",
        START => "red",
        GOAL => "green",
        GOAL_CENTER => "dark green",
        EDGE => "light blue",
        LEAF => "blue",
        SECTOR => "yellow",
        _ => "unnamed",
    }
}

/// Uniform-scale world→pixel map with the y axis flipped so world +y is up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldToPixel {
    /// Pixels per meter.
    pub scale: f64,
    pub origin_x: f64,
    pub top_y: f64,
}

impl WorldToPixel {
    pub fn fit(bounds: &Rect, size: u32) -> (Self, u32, u32) {
        let scale = size as f64 / bounds.width().max(bounds.height());
        let w = ((bounds.width() * scale).round() as u32).max(1);
        let h = ((bounds.height() * scale).round() as u32).max(1);
        (
            WorldToPixel {
                scale,
                origin_x: bounds.min.x,
                top_y: bounds.max.y,
            },
            w,
            h,
        )
    }

    /// Continuous pixel coordinates (x right, y down).
    pub fn to_pixel(&self, p: Point2) -> (f64, f64) {
        ((p.x - self.origin_x) * self.scale, (self.top_y - p.y) * self.scale)
    }

    pub fn to_world(&self, px: f64, py: f64) -> Point2 {
        Point2::new(px / self.scale + self.origin_x, self.top_y - py / self.scale)
    }

    /// Center of the pixel containing `p`, in world coordinates.
    pub fn snap(&self, p: Point2) -> Point2 {
        let (px, py) = self.to_pixel(p);
        self.to_world(px.floor() + 0.5, py.floor() + 0.5)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub width: u32,
    pub height: u32,
    /// Row-major 8-bit RGB.
    pub pixels: Vec<u8>,
    pub legend: Vec<(Role, Rgb)>,
    pub transform: WorldToPixel,
}

impl Snapshot {
    pub fn pixel(&self, x: u32, y: u32) -> Rgb {
        let i = 3 * (y as usize * self.width as usize + x as usize);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// Pixel containing world point `p`, clamped to the raster.
    pub fn pixel_at(&self, p: Point2) -> Rgb {
        let (x, y) = self.pixel_index(p);
        self.pixel(x, y)
    }

    pub fn pixel_index(&self, p: Point2) -> (u32, u32) {
        let (px, py) = self.transform.to_pixel(p);
        (
            (px.floor().max(0.0) as u32).min(self.width - 1),
            (py.floor().max(0.0) as u32).min(self.height - 1),
        )
    }

    pub fn colors(&self) -> std::collections::BTreeSet<Rgb> {
        self.pixels.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()
    }

    pub fn to_png(&self) -> Vec<u8> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width, self.height);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut writer = enc.write_header().expect("png header");
            writer.write_image_data(&self.pixels).expect("png data");
        }
        out
    }

    fn put(&mut self, x: i64, y: i64, c: Rgb) {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return;
        }
        let i = 3 * (y as usize * self.width as usize + x as usize);
        self.pixels[i..i + 3].copy_from_slice(&c);
    }

    fn blend(&mut self, x: i64, y: i64, c: Rgb, alpha: f64) {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return;
        }
        let i = 3 * (y as usize * self.width as usize + x as usize);
        for (px, ch) in self.pixels[i..i + 3].iter_mut().zip(c) {
            *px = (*px as f64 * (1.0 - alpha) + ch as f64 * alpha).round() as u8;
        }
    }

    /// Fills every pixel the closed rectangle touches.
    fn fill_rect(&mut self, r: &Rect, c: Rgb) {
        let (x0, y0) = self.transform.to_pixel(Point2::new(r.min.x, r.max.y));
        let (x1, y1) = self.transform.to_pixel(Point2::new(r.max.x, r.min.y));
        let (ix0, iy0) = (x0.floor() as i64, y0.floor() as i64);
        let ix1 = (x1.ceil() as i64 - 1).max(ix0);
        let iy1 = (y1.ceil() as i64 - 1).max(iy0);
        for y in iy0..=iy1 {
            for x in ix0..=ix1 {
                self.put(x, y, c);
            }
        }
    }

    fn line(&mut self, a: Point2, b: Point2, c: Rgb) {
        let (ax, ay) = self.transform.to_pixel(a);
        let (bx, by) = self.transform.to_pixel(b);
        let (mut x0, mut y0) = (ax.floor() as i64, ay.floor() as i64);
        let (x1, y1) = (bx.floor() as i64, by.floor() as i64);
        let dx = (x1 - x0).abs();
        let dy = -(y1 - y0).abs();
        let sx = if x0 < x1 { 1 } else { -1 };
        let sy = if y0 < y1 { 1 } else { -1 };
        let mut err = dx + dy;
        loop {
            self.put(x0, y0, c);
            if x0 == x1 && y0 == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x0 += sx;
            }
            if e2 <= dx {
                err += dx;
                y0 += sy;
            }
        }
    }

    /// Annulus `inner < d ≤ outer` around `center`; `inner < 0` gives a disc.
    fn ring(&mut self, center: Point2, outer: f64, inner: f64, c: Rgb) {
        let (cx, cy) = self.transform.to_pixel(center);
        let (icx, icy) = (cx.floor() as i64, cy.floor() as i64);
        let reach = outer.ceil() as i64;
        for y in icy - reach..=icy + reach {
            for x in icx - reach..=icx + reach {
                let d = (((x - icx) * (x - icx) + (y - icy) * (y - icy)) as f64).sqrt();
                if d <= outer && d > inner {
                    self.put(x, y, c);
                }
            }
        }
    }

    fn wedge(&mut self, s: &Sector, c: Rgb, alpha: f64) {
        let r = s.radius;
        let (x0, y0) = self.transform.to_pixel(Point2::new(s.apex.x - r, s.apex.y + r));
        let (x1, y1) = self.transform.to_pixel(Point2::new(s.apex.x + r, s.apex.y - r));
        for y in y0.floor() as i64..=y1.ceil() as i64 {
            for x in x0.floor() as i64..=x1.ceil() as i64 {
                let w = self.transform.to_world(x as f64 + 0.5, y as f64 + 0.5);
                if s.contains(w) {
                    self.blend(x, y, c, alpha);
                }
            }
        }
    }
}

/// Renders `env` and `tree` into an RGB raster whose longer side is `size`.
pub fn render_snapshot(
    env: &Env,
    tree: &Tree,
    highlight: Option<usize>,
    sector: Option<&Sector>,
    size: u32,
) -> Snapshot {
    use palette::*;
    let (transform, width, height) = WorldToPixel::fit(env.bounds(), size);
    let mut s = Snapshot {
        width,
        height,
        pixels: BACKGROUND
            .iter()
            .copied()
            .cycle()
            .take(3 * width as usize * height as usize)
            .collect(),
        legend: legend(),
        transform,
    };
    s.fill_rect(env.goal(), GOAL);
    for o in env.obstacles() {
        s.fill_rect(o, OBSTACLE);
    }
    if let Some(sec) = sector {
        s.wedge(sec, SECTOR, SECTOR_ALPHA);
    }
    for (p, c) in tree.edges() {
        s.line(tree.point(p), tree.point(c), EDGE);
    }
    for leaf in tree.leaves() {
        s.ring(tree.point(leaf), LEAF_RADIUS_PX, -1.0, LEAF);
    }
    if let Some(h) = highlight {
        s.ring(tree.point(h), HIGHLIGHT_OUTER_PX, HIGHLIGHT_INNER_PX, LEAF);
    }
    s.ring(env.goal_centroid(), GOAL_CENTER_RADIUS_PX, -1.0, GOAL_CENTER);
    s.ring(env.initial_position(), START_RADIUS_PX, -1.0, START);
    s
}

/// A snapshot that is rendered on first access. Oracles that never look at
/// the image never pay for it.
pub struct SceneView<'a> {
    source: Option<(&'a Env, &'a Tree, Option<usize>, u32)>,
    cell: OnceLock<Snapshot>,
}

impl<'a> SceneView<'a> {
    pub fn lazy(env: &'a Env, tree: &'a Tree, highlight: Option<usize>, size: u32) -> Self {
        SceneView {
            source: Some((env, tree, highlight, size)),
            cell: OnceLock::new(),
        }
    }

    pub fn ready(snapshot: Snapshot) -> Self {
        let cell = OnceLock::new();
        let _ = cell.set(snapshot);
        SceneView { source: None, cell }
    }

    pub fn snapshot(&self) -> &Snapshot {
        self.cell.get_or_init(|| {
            let (env, tree, highlight, size) = self.source.expect("lazy source");
            render_snapshot(env, tree, highlight, None, size)
        })
    }

    pub fn is_rendered(&self) -> bool {
        self.cell.get().is_some()
    }
}

impl std::fmt::Debug for SceneView<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SceneView")
            .field("rendered", &self.is_rendered())
            .finish()
    }
}

fn hex(c: Rgb) -> String {
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// SVG figure of the scene with optional tree, planned path and sector.
pub fn export_figure(env: &Env, tree: Option<&Tree>, plan: Option<&PlanResult>, sector: Option<&Sector>) -> Vec<u8> {
    use palette::*;
    let b = env.bounds();
    let fy = |y: f64| b.max.y - y;
    let fx = |x: f64| x - b.min.x;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.3}" height="{h:.3}" viewBox="0 0 {w:.3} {h:.3}">"#,
        w = b.width(),
        h = b.height() + 40.0,
    );
    let _ = writeln!(
        svg,
        r#"<rect class="background" x="0" y="0" width="{:.3}" height="{:.3}" fill="{}"/>"#,
        b.width(),
        b.height(),
        hex(BACKGROUND)
    );
    let rect = |svg: &mut String, class: &str, r: &Rect, color: Rgb| {
        let _ = writeln!(
            svg,
            r#"<rect class="{class}" x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="{}"/>"#,
            fx(r.min.x),
            fy(r.max.y),
            r.width(),
            r.height(),
            hex(color)
        );
    };
    rect(&mut svg, "goal", env.goal(), GOAL);
    for o in env.obstacles() {
        rect(&mut svg, "obstacle", o, OBSTACLE);
    }
    if let Some(s) = sector {
        let half = s.aperture / 2.0;
        let a = s.apex + Point2::from_polar(s.radius, s.direction - half);
        let c = s.apex + Point2::from_polar(s.radius, s.direction + half);
        let large = if s.aperture > std::f64::consts::PI { 1 } else { 0 };
        let _ = writeln!(
            svg,
            r#"<path class="sector" d="M {:.3} {:.3} L {:.3} {:.3} A {r:.3} {r:.3} 0 {large} 0 {:.3} {:.3} Z" fill="{}" fill-opacity="{SECTOR_ALPHA}"/>"#,
            fx(s.apex.x),
            fy(s.apex.y),
            fx(a.x),
            fy(a.y),
            fx(c.x),
            fy(c.y),
            hex(SECTOR),
            r = s.radius,
        );
    }
    if let Some(t) = tree {
        let mut d = String::new();
        for (p, c) in t.edges() {
            let (p, c) = (t.point(p), t.point(c));
            let _ = write!(d, "M {:.3} {:.3} L {:.3} {:.3} ", fx(p.x), fy(p.y), fx(c.x), fy(c.y));
        }
        if !d.is_empty() {
            let _ = writeln!(
                svg,
                r#"<path class="tree" d="{}" stroke="{}" stroke-width="0.8" fill="none"/>"#,
                d.trim_end(),
                hex(EDGE)
            );
        }
        for leaf in t.leaves() {
            let p = t.point(leaf);
            let _ = writeln!(
                svg,
                r#"<circle class="leaf" cx="{:.3}" cy="{:.3}" r="1.5" fill="{}"/>"#,
                fx(p.x),
                fy(p.y),
                hex(LEAF)
            );
        }
    }
    if let Some(plan) = plan.filter(|p| !p.path.is_empty()) {
        let pts: Vec<String> = plan
            .path
            .iter()
            .map(|p| format!("{:.3},{:.3}", fx(p.x), fy(p.y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline class="path" points="{}" stroke="{}" stroke-width="2" fill="none"/>"#,
            pts.join(" "),
            hex(START)
        );
    }
    let g = env.goal_centroid();
    let _ = writeln!(
        svg,
        r#"<circle class="goal-center" cx="{:.3}" cy="{:.3}" r="2.5" fill="{}"/>"#,
        fx(g.x),
        fy(g.y),
        hex(GOAL_CENTER)
    );
    let s = env.initial_position();
    let _ = writeln!(
        svg,
        r#"<circle class="start" cx="{:.3}" cy="{:.3}" r="4" fill="{}"/>"#,
        fx(s.x),
        fy(s.y),
        hex(START)
    );
    let _ = writeln!(svg, r#"<g class="legend" font-family="sans-serif" font-size="10">"#);
    let entries = [
        ("start", START),
        ("goal", GOAL),
        ("obstacle", OBSTACLE),
        ("tree", EDGE),
        ("leaf", LEAF),
        ("sector", SECTOR),
    ];
    for (k, (label, color)) in entries.iter().enumerate() {
        let x = 10.0 + 80.0 * k as f64;
        let y = b.height() + 15.0;
        let _ = writeln!(
            svg,
            r#"<rect x="{x:.3}" y="{y:.3}" width="10" height="10" fill="{}"/><text x="{:.3}" y="{:.3}">{label}</text>"#,
            hex(*color),
            x + 14.0,
            y + 9.0
        );
    }
    let _ = writeln!(svg, "</g>");
    svg.push_str("</svg>\n");
    svg.into_bytes()
}
