use serde::{Deserialize, Serialize};

use crate::numeric::{RngStream, Tensor};

use super::DataError;

pub const MIN_CANVAS: usize = 16;
const MAX_ATTEMPTS: usize = 100;
/// Acceptable mask coverage as a fraction of the canvas.
const COVERAGE_LO: f64 = 0.20;
const COVERAGE_HI: f64 = 0.60;

/// The eight procedural shape families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeKind {
    Circle,
    Square,
    Triangle,
    Cross,
    Ring,
    Star,
    Heart,
    Arrow,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 8] = [
        ShapeKind::Circle,
        ShapeKind::Square,
        ShapeKind::Triangle,
        ShapeKind::Cross,
        ShapeKind::Ring,
        ShapeKind::Star,
        ShapeKind::Heart,
        ShapeKind::Arrow,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ShapeKind::Circle => "circle",
            ShapeKind::Square => "square",
            ShapeKind::Triangle => "triangle",
            ShapeKind::Cross => "cross",
            ShapeKind::Ring => "ring",
            ShapeKind::Star => "star",
            ShapeKind::Heart => "heart",
            ShapeKind::Arrow => "arrow",
        }
    }

    /// Inside test in the canonical frame: y up, canvas spanning [-1, 1].
    fn contains(&self, x: f64, y: f64) -> bool {
        match self {
            ShapeKind::Circle => x * x + y * y <= 0.625 * 0.625,
            ShapeKind::Square => x.abs().max(y.abs()) <= 0.56,
            ShapeKind::Triangle => {
                point_in_triangle(x, y, (0.0, 0.85), (-0.82, -0.62), (0.82, -0.62))
            }
            ShapeKind::Cross => {
                (x.abs() <= 0.26 && y.abs() <= 0.82) || (y.abs() <= 0.26 && x.abs() <= 0.82)
            }
            ShapeKind::Ring => {
                let r2 = x * x + y * y;
                (0.40 * 0.40..=0.78 * 0.78).contains(&r2)
            }
            ShapeKind::Star => point_in_star(x, y, 0.85, 0.45),
            ShapeKind::Heart => {
                // Classic sextic heart, scaled to the canvas.
                let hx = x / 0.62;
                let hy = y / 0.62 + 0.12;
                let a = hx * hx + hy * hy - 1.0;
                a * a * a - hx * hx * hy * hy * hy <= 0.0
            }
            ShapeKind::Arrow => {
                point_in_triangle(x, y, (0.0, 0.9), (-0.7, 0.05), (0.7, 0.05))
                    || (x.abs() <= 0.26 && (-0.85..=0.25).contains(&y))
            }
        }
    }
}

fn point_in_triangle(px: f64, py: f64, a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> bool {
    let sign = |p: (f64, f64), q: (f64, f64), r: (f64, f64)| {
        (p.0 - r.0) * (q.1 - r.1) - (q.0 - r.0) * (p.1 - r.1)
    };
    let d1 = sign((px, py), a, b);
    let d2 = sign((px, py), b, c);
    let d3 = sign((px, py), c, a);
    let has_neg = d1 < 0.0 || d2 < 0.0 || d3 < 0.0;
    let has_pos = d1 > 0.0 || d2 > 0.0 || d3 > 0.0;
    !(has_neg && has_pos)
}

/// Five-pointed star via point-in-polygon over its ten vertices.
fn point_in_star(px: f64, py: f64, outer: f64, inner: f64) -> bool {
    let mut vertices = [(0.0f64, 0.0f64); 10];
    for (k, v) in vertices.iter_mut().enumerate() {
        let r = if k % 2 == 0 { outer } else { inner };
        let angle = std::f64::consts::FRAC_PI_2 + k as f64 * std::f64::consts::PI / 5.0;
        *v = (r * angle.cos(), r * angle.sin());
    }
    // Even-odd crossing test.
    let mut inside = false;
    let mut j = 9;
    for i in 0..10 {
        let (xi, yi) = vertices[i];
        let (xj, yj) = vertices[j];
        if ((yi > py) != (yj > py)) && px < (xj - xi) * (py - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Jitter ranges for mask generation: position as a fraction of the canvas,
/// scale as a relative factor, rotation in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JitterRanges {
    pub position: f64,
    pub scale: f64,
    pub rotation: f64,
}

impl Default for JitterRanges {
    fn default() -> Self {
        Self {
            position: 0.15,
            scale: 0.20,
            rotation: 20.0_f64.to_radians(),
        }
    }
}

impl JitterRanges {
    pub fn none() -> Self {
        Self {
            position: 0.0,
            scale: 0.0,
            rotation: 0.0,
        }
    }
}

/// A shape class: id, geometry family, and jitter ranges for its generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeClass {
    pub id: usize,
    pub kind: ShapeKind,
    pub jitter: JitterRanges,
}

impl ShapeClass {
    pub fn new(id: usize, kind: ShapeKind) -> Self {
        Self {
            id,
            kind,
            jitter: JitterRanges::default(),
        }
    }

    pub fn with_jitter(mut self, jitter: JitterRanges) -> Self {
        self.jitter = jitter;
        self
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }
}

fn render_mask(kind: ShapeKind, size: usize, dx: f64, dy: f64, scale: f64, rot: f64) -> Tensor {
    let mut mask = Tensor::zeros(&[size, size]);
    let (sin_r, cos_r) = rot.sin_cos();
    let inv_scale = 1.0 / scale;
    for row in 0..size {
        for col in 0..size {
            // Pixel center in the canonical frame (y up), undo jitter.
            let px = 2.0 * (col as f64 + 0.5) / size as f64 - 1.0 - dx;
            let py = -(2.0 * (row as f64 + 0.5) / size as f64 - 1.0) - dy;
            let rx = (cos_r * px + sin_r * py) * inv_scale;
            let ry = (-sin_r * px + cos_r * py) * inv_scale;
            if kind.contains(rx, ry) {
                mask.set2(row, col, 1.0);
            }
        }
    }
    keep_largest_component(&mut mask, size);
    mask
}

/// Thin tips can pixelate into stray islands; the mask keeps only its largest
/// 4-connected component so the region invariant holds by construction.
fn keep_largest_component(mask: &mut Tensor, size: usize) {
    let n = size * size;
    let mut component = vec![0u32; n];
    let mut next = 0u32;
    let mut best = (0u32, 0usize);
    for start in 0..n {
        if mask.data()[start] < 0.5 || component[start] != 0 {
            continue;
        }
        next += 1;
        let mut count = 0usize;
        let mut queue = vec![start];
        component[start] = next;
        while let Some(p) = queue.pop() {
            count += 1;
            let (y, x) = (p / size, p % size);
            for (ny, nx) in [
                (y.wrapping_sub(1), x),
                (y + 1, x),
                (y, x.wrapping_sub(1)),
                (y, x + 1),
            ] {
                if ny < size && nx < size {
                    let q = ny * size + nx;
                    if mask.data()[q] > 0.5 && component[q] == 0 {
                        component[q] = next;
                        queue.push(q);
                    }
                }
            }
        }
        if count > best.1 {
            best = (next, count);
        }
    }
    if next > 1 {
        for (p, &label) in component.iter().enumerate() {
            if label != 0 && label != best.0 {
                mask.data_mut()[p] = 0.0;
            }
        }
    }
}

/// Binary mask honoring the class geometry with jitter drawn from the stream.
///
/// Draws are resampled while the rendered coverage falls outside 20-60% of
/// the canvas; after 100 attempts the draw is reported as degenerate.
pub fn make_shape_mask(
    class: &ShapeClass,
    stream: &mut RngStream,
    size: usize,
) -> Result<Tensor, DataError> {
    if size < MIN_CANVAS {
        return Err(DataError::CanvasTooSmall {
            size,
            min: MIN_CANVAS,
        });
    }
    for _ in 0..MAX_ATTEMPTS {
        let j = class.jitter;
        // Position jitter is a canvas fraction; the canonical frame spans 2.
        let dx = stream.next_range(-1.0, 1.0) * j.position * 2.0;
        let dy = stream.next_range(-1.0, 1.0) * j.position * 2.0;
        let scale = 1.0 + stream.next_range(-1.0, 1.0) * j.scale;
        let rot = stream.next_range(-1.0, 1.0) * j.rotation;
        let mask = render_mask(class.kind, size, dx, dy, scale, rot);
        let coverage = mask.data().iter().sum::<f64>() / (size * size) as f64;
        if (COVERAGE_LO..=COVERAGE_HI).contains(&coverage) {
            return Ok(mask);
        }
    }
    Err(DataError::DegenerateMask {
        shape: class.name().to_string(),
        attempts: MAX_ATTEMPTS,
    })
}
