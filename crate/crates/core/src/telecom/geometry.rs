//! Planar geometry in metres: polygons, polylines and a bucket index.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, o: Point) -> f64 {
        (self.x - o.x).hypot(self.y - o.y)
    }

    pub fn lerp(self, o: Point, t: f64) -> Point {
        Point::new(self.x + t * (o.x - self.x), self.y + t * (o.y - self.y))
    }

    /// Bearing from `self` to `o`, counter-clockwise from the x axis.
    pub fn bearing(self, o: Point) -> f64 {
        (o.y - self.y).atan2(o.x - self.x)
    }
}

/// Smallest signed difference `a − b` of two angles, in (−π, π].
pub fn angle_diff(a: f64, b: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let d = (a - b).rem_euclid(TAU);
    if d > PI {
        d - TAU
    } else {
        d
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub min: Point,
    pub max: Point,
}

impl BBox {
    pub fn of(points: &[Point]) -> Self {
        let mut b = BBox { min: points[0], max: points[0] };
        for p in points {
            b.min.x = b.min.x.min(p.x);
            b.min.y = b.min.y.min(p.y);
            b.max.x = b.max.x.max(p.x);
            b.max.y = b.max.y.max(p.y);
        }
        b
    }

    pub fn union(self, o: BBox) -> Self {
        BBox {
            min: Point::new(self.min.x.min(o.min.x), self.min.y.min(o.min.y)),
            max: Point::new(self.max.x.max(o.max.x), self.max.y.max(o.max.y)),
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn clamp(&self, p: Point) -> Point {
        Point::new(p.x.clamp(self.min.x, self.max.x), p.y.clamp(self.min.y, self.max.y))
    }
}

/// Simple polygon; the ring is implicitly closed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub vertices: Vec<Point>,
}

impl Polygon {
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self {
            vertices: vec![Point::new(x0, y0), Point::new(x1, y0), Point::new(x1, y1), Point::new(x0, y1)],
        }
    }

    pub fn bbox(&self) -> BBox {
        BBox::of(&self.vertices)
    }

    /// Even-odd ray casting; points on the lower/left edges count as inside.
    pub fn contains(&self, p: Point) -> bool {
        let v = &self.vertices;
        let mut inside = false;
        let mut j = v.len() - 1;
        for i in 0..v.len() {
            let (a, b) = (v[i], v[j]);
            if (a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x {
                inside = !inside;
            }
            j = i;
        }
        inside
    }

    pub fn area(&self) -> f64 {
        let v = &self.vertices;
        let mut s = 0.0;
        for i in 0..v.len() {
            let (a, b) = (v[i], v[(i + 1) % v.len()]);
            s += a.x * b.y - b.x * a.y;
        }
        0.5 * s.abs()
    }

    /// Distance from `p` to the nearest edge.
    pub fn boundary_distance(&self, p: Point) -> f64 {
        let n = self.vertices.len();
        (0..n)
            .map(|i| segment_distance(p, self.vertices[i], self.vertices[(i + 1) % n]).0)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn centroid(&self) -> Point {
        let v = &self.vertices;
        let (mut cx, mut cy, mut s) = (0.0, 0.0, 0.0);
        for i in 0..v.len() {
            let (a, b) = (v[i], v[(i + 1) % v.len()]);
            let cr = a.x * b.y - b.x * a.y;
            s += cr;
            cx += (a.x + b.x) * cr;
            cy += (a.y + b.y) * cr;
        }
        Point::new(cx / (3.0 * s), cy / (3.0 * s))
    }
}

/// Distance from `p` to segment `ab` and the segment parameter of the
/// closest point.
pub fn segment_distance(p: Point, a: Point, b: Point) -> (f64, f64) {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0) };
    (p.dist(a.lerp(b, t)), t)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    pub points: Vec<Point>,
}

impl Polyline {
    pub fn length(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].dist(w[1])).sum()
    }

    /// Distance to the line and the arc length of the closest point.
    pub fn project(&self, p: Point) -> (f64, f64) {
        let mut best = (f64::INFINITY, 0.0);
        let mut acc = 0.0;
        for w in self.points.windows(2) {
            let (d, t) = segment_distance(p, w[0], w[1]);
            let seg = w[0].dist(w[1]);
            if d < best.0 {
                best = (d, acc + t * seg);
            }
            acc += seg;
        }
        best
    }

    pub fn distance(&self, p: Point) -> f64 {
        self.project(p).0
    }

    /// Point at arc length `s` (clamped to the line).
    pub fn at(&self, s: f64) -> Point {
        let mut acc = 0.0;
        for w in self.points.windows(2) {
            let seg = w[0].dist(w[1]);
            if acc + seg >= s && seg > 0.0 {
                return w[0].lerp(w[1], ((s - acc) / seg).clamp(0.0, 1.0));
            }
            acc += seg;
        }
        *self.points.last().expect("non-empty polyline")
    }

    /// Vertices between arc lengths `s0` and `s1`, both ends included, in
    /// travel order.
    pub fn between(&self, s0: f64, s1: f64) -> Vec<Point> {
        let (lo, hi) = (s0.min(s1), s0.max(s1));
        let mut pts = vec![self.at(lo)];
        let mut acc = 0.0;
        for w in self.points.windows(2) {
            acc += w[0].dist(w[1]);
            if acc > lo && acc < hi {
                pts.push(w[1]);
            }
        }
        pts.push(self.at(hi));
        if s0 > s1 {
            pts.reverse();
        }
        pts
    }
}

/// Uniform bucket grid over item bounding boxes.
#[derive(Clone, Debug)]
pub struct BucketIndex {
    origin: Point,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

impl BucketIndex {
    pub fn new(boxes: &[BBox], cell: f64) -> Self {
        let all = boxes.iter().copied().reduce(BBox::union).unwrap_or(BBox { min: Point::default(), max: Point::default() });
        let nx = (((all.max.x - all.min.x) / cell).floor() as usize + 1).max(1);
        let ny = (((all.max.y - all.min.y) / cell).floor() as usize + 1).max(1);
        let mut idx = Self { origin: all.min, cell, nx, ny, buckets: vec![Vec::new(); nx * ny] };
        for (i, b) in boxes.iter().enumerate() {
            let (x0, y0) = idx.cell_of(b.min);
            let (x1, y1) = idx.cell_of(b.max);
            for cy in y0..=y1 {
                for cx in x0..=x1 {
                    idx.buckets[cy * nx + cx].push(i);
                }
            }
        }
        idx
    }

    fn cell_of(&self, p: Point) -> (usize, usize) {
        let cx = ((p.x - self.origin.x) / self.cell).floor().clamp(0.0, (self.nx - 1) as f64) as usize;
        let cy = ((p.y - self.origin.y) / self.cell).floor().clamp(0.0, (self.ny - 1) as f64) as usize;
        (cx, cy)
    }

    /// Items whose box may contain `p`.
    pub fn at(&self, p: Point) -> &[usize] {
        let (cx, cy) = self.cell_of(p);
        &self.buckets[cy * self.nx + cx]
    }

    /// Items in the square ring of cells at Chebyshev distance `r` around
    /// the cell of `p`.
    pub fn ring(&self, p: Point, r: usize) -> impl Iterator<Item = usize> + '_ {
        let (cx, cy) = self.cell_of(p);
        let (cx, cy, r) = (cx as isize, cy as isize, r as isize);
        let (nx, ny) = (self.nx as isize, self.ny as isize);
        (cy - r..=cy + r)
            .flat_map(move |y| (cx - r..=cx + r).map(move |x| (x, y)))
            .filter(move |&(x, y)| (x - cx).abs().max((y - cy).abs()) == r && x >= 0 && y >= 0 && x < nx && y < ny)
            .flat_map(move |(x, y)| self.buckets[(y * nx + x) as usize].iter().copied())
    }

    pub fn cell(&self) -> f64 {
        self.cell
    }

    pub fn max_ring(&self) -> usize {
        self.nx.max(self.ny)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polygon_basics() {
        let sq = Polygon::rect(0.0, 0.0, 2.0, 2.0);
        assert!(sq.contains(Point::new(1.0, 1.0)));
        assert!(!sq.contains(Point::new(2.5, 1.0)));
        assert_eq!(sq.area(), 4.0);
        assert_eq!(sq.centroid(), Point::new(1.0, 1.0));
        let tri = Polygon { vertices: vec![Point::new(0.0, 0.0), Point::new(4.0, 0.0), Point::new(0.0, 4.0)] };
        assert!(tri.contains(Point::new(1.0, 1.0)));
        assert!(!tri.contains(Point::new(3.0, 3.0)));
    }

    #[test]
    fn polyline_projection() {
        let l = Polyline { points: vec![Point::new(0.0, 0.0), Point::new(10.0, 0.0), Point::new(10.0, 10.0)] };
        assert_eq!(l.length(), 20.0);
        let (d, s) = l.project(Point::new(12.0, 5.0));
        assert_eq!((d, s), (2.0, 15.0));
        assert_eq!(l.at(15.0), Point::new(10.0, 5.0));
        assert_eq!(l.between(15.0, 5.0), vec![Point::new(10.0, 5.0), Point::new(10.0, 0.0), Point::new(5.0, 0.0)]);
    }

    #[test]
    fn angles_wrap() {
        use std::f64::consts::PI;
        assert!((angle_diff(0.1, 2.0 * PI - 0.1) - 0.2).abs() < 1e-12);
        assert!((angle_diff(-PI + 0.1, PI - 0.1) - 0.2).abs() < 1e-12);
    }
}
