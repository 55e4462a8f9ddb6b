//! Plain 2-D geometry: points, boxes, and closed-polygon measurements.
//!
//! Coordinates are `(x, y)` with `x` along the width axis and `y` along the
//! height axis. Image- and RoI-normalized data lives in `[0,1]^2`, but the
//! types themselves accept any finite coordinates — losses are checked for
//! translation covariance, which requires evaluating them off the unit
//! square.

/// A 2-D point. `x` runs along width, `y` along height.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pt {
    pub x: f64,
    pub y: f64,
}

impl Pt {
    pub fn new(x: f64, y: f64) -> Self {
        Pt { x, y }
    }

    pub fn dist(self, other: Pt) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }

    pub fn dist2(self, other: Pt) -> f64 {
        (self.x - other.x).powi(2) + (self.y - other.y).powi(2)
    }
}

/// An ordered list of points; the carrier for boundaries and sampled
/// refinement locations.
pub type PointSet = Vec<Pt>;

/// Axis-aligned box `(x0, y0)` top-left inclusive to `(x1, y1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxF {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BoxF {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        BoxF { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        (self.width().max(0.0)) * (self.height().max(0.0))
    }

    pub fn is_valid(&self) -> bool {
        self.x0 < self.x1 && self.y0 < self.y1 && self.x0.is_finite() && self.y1.is_finite()
    }

    /// Intersection-over-union of two boxes; empty union gives 0.
    pub fn iou(&self, other: &BoxF) -> f64 {
        let ix = (self.x1.min(other.x1) - self.x0.max(other.x0)).max(0.0);
        let iy = (self.y1.min(other.y1) - self.y0.max(other.y0)).max(0.0);
        let inter = ix * iy;
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}

/// Perimeter of the closed polygon through `poly` (last vertex connects back
/// to the first).
pub fn polygon_perimeter(poly: &[Pt]) -> f64 {
    if poly.len() < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for k in 0..poly.len() {
        total += poly[k].dist(poly[(k + 1) % poly.len()]);
    }
    total
}

/// Signed shoelace area; positive for counter-clockwise vertex order (in the
/// x-right / y-up sense).
pub fn polygon_signed_area(poly: &[Pt]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for k in 0..poly.len() {
        let a = poly[k];
        let b = poly[(k + 1) % poly.len()];
        acc += a.x * b.y - b.x * a.y;
    }
    0.5 * acc
}
