//! Small 3-vector and axis-aligned-box helpers used throughout the crate.
//! Positions are in micrometers unless noted otherwise.

pub type Vec3 = [f64; 3];

pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm2(a: Vec3) -> f64 {
    dot(a, a)
}

pub fn norm(a: Vec3) -> f64 {
    norm2(a).sqrt()
}

pub fn dist2(a: Vec3, b: Vec3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

pub fn normalize(a: Vec3) -> Vec3 {
    let n = norm(a);
    if n == 0.0 {
        [0.0; 3]
    } else {
        scale(a, 1.0 / n)
    }
}

pub fn is_finite(a: Vec3) -> bool {
    a.iter().all(|c| c.is_finite())
}

/// Round-half-up rounding of a non-negative quantity to an integer count.
pub fn round_half_up(x: f64) -> i64 {
    (x + 0.5).floor() as i64
}

/// Axis-aligned bounding box in µm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    /// Tight box over a non-empty point set.
    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Option<Aabb> {
        let mut it = points.into_iter();
        let first = *it.next()?;
        let mut bb = Aabb {
            min: first,
            max: first,
        };
        for p in it {
            for (a, &v) in p.iter().enumerate() {
                bb.min[a] = bb.min[a].min(v);
                bb.max[a] = bb.max[a].max(v);
            }
        }
        Some(bb)
    }

    /// Expand by `pad` on every side.
    pub fn expanded(&self, pad: f64) -> Aabb {
        Aabb {
            min: [self.min[0] - pad, self.min[1] - pad, self.min[2] - pad],
            max: [self.max[0] + pad, self.max[1] + pad, self.max[2] + pad],
        }
    }

    pub fn contains(&self, p: Vec3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    /// Componentwise clamp of a point into the box.
    pub fn clamp(&self, p: Vec3) -> Vec3 {
        [
            p[0].clamp(self.min[0], self.max[0]),
            p[1].clamp(self.min[1], self.max[1]),
            p[2].clamp(self.min[2], self.max[2]),
        ]
    }

    pub fn extent(&self) -> Vec3 {
        sub(self.max, self.min)
    }
}

/// Dominant principal axis of a point cloud via power iteration on the
/// covariance matrix. Sign is fixed so the component with the largest
/// magnitude is positive. Returns `None` for degenerate (empty or
/// zero-covariance) input.
pub fn principal_axis(points: &[Vec3]) -> Option<Vec3> {
    if points.is_empty() {
        return None;
    }
    let n = points.len() as f64;
    let mut mean = [0.0; 3];
    for p in points {
        mean = add(mean, *p);
    }
    mean = scale(mean, 1.0 / n);

    // Symmetric covariance, row-major upper triangle mirrored.
    let mut c = [[0.0f64; 3]; 3];
    for p in points {
        let d = sub(*p, mean);
        for i in 0..3 {
            for j in 0..3 {
                c[i][j] += d[i] * d[j];
            }
        }
    }
    for row in &mut c {
        for v in row.iter_mut() {
            *v /= n;
        }
    }

    let mut v = [1.0, 0.7, 0.4];
    for _ in 0..200 {
        let w = [
            c[0][0] * v[0] + c[0][1] * v[1] + c[0][2] * v[2],
            c[1][0] * v[0] + c[1][1] * v[1] + c[1][2] * v[2],
            c[2][0] * v[0] + c[2][1] * v[1] + c[2][2] * v[2],
        ];
        let nw = norm(w);
        if nw < 1e-30 {
            return None;
        }
        v = scale(w, 1.0 / nw);
    }
    // Deterministic sign convention.
    let mut k = 0;
    for a in 1..3 {
        if v[a].abs() > v[k].abs() {
            k = a;
        }
    }
    if v[k] < 0.0 {
        v = scale(v, -1.0);
    }
    Some(v)
}
