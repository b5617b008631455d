//! Rigid object surfaces under the tool, in the world frame. Heights are in
//! metres above the nominal contact plane `z = 0`.

pub type Vec2 = [f64; 2];

pub fn rotate(p: Vec2, yaw: f64) -> Vec2 {
    let (s, c) = yaw.sin_cos();
    [c * p[0] - s * p[1], s * p[0] + c * p[1]]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Surface {
    /// Flat top at height 0 over an axis-aligned rectangle; nothing outside.
    Block { centre: Vec2, half: Vec2 },
    /// Unbounded board, `slope · p + amplitude sin(2π p_x / wavelength + phase)`.
    Board { slope: Vec2, amplitude: f64, wavelength: f64, phase: f64 },
    /// Flat top with a rectangular hole rimmed by a 45° chamfer.
    Hole { centre: Vec2, yaw: f64, half: Vec2, chamfer: f64, depth: f64 },
}

impl Surface {
    /// Surface height at `p`, or `None` where there is nothing to touch.
    pub fn height(&self, p: Vec2) -> Option<f64> {
        match *self {
            Surface::Block { centre, half } => {
                let inside = (p[0] - centre[0]).abs() <= half[0] && (p[1] - centre[1]).abs() <= half[1];
                inside.then_some(0.0)
            }
            Surface::Board { slope, amplitude, wavelength, phase } => Some(
                slope[0] * p[0]
                    + slope[1] * p[1]
                    + amplitude * (2.0 * std::f64::consts::PI * p[0] / wavelength + phase).sin(),
            ),
            Surface::Hole { centre, yaw, half, chamfer, depth } => {
                let (d, _) = hole_distance(p, centre, yaw, half);
                Some(if d <= 0.0 {
                    -depth
                } else if d < chamfer {
                    -(chamfer - d)
                } else {
                    0.0
                })
            }
        }
    }

    /// Horizontal gradient of the height at `p`.
    pub fn gradient(&self, p: Vec2) -> Vec2 {
        match *self {
            Surface::Block { .. } => [0.0, 0.0],
            Surface::Board { slope, amplitude, wavelength, phase } => {
                let k = 2.0 * std::f64::consts::PI / wavelength;
                [slope[0] + amplitude * k * (k * p[0] + phase).cos(), slope[1]]
            }
            Surface::Hole { centre, yaw, half, chamfer, .. } => {
                let (d, dir) = hole_distance(p, centre, yaw, half);
                if d > 0.0 && d < chamfer {
                    rotate(dir, yaw)
                } else {
                    [0.0, 0.0]
                }
            }
        }
    }
}

/// Chebyshev-style distance outside the hole rectangle and the outward
/// axis (hole frame) along which it is measured.
fn hole_distance(p: Vec2, centre: Vec2, yaw: f64, half: Vec2) -> (f64, Vec2) {
    let local = rotate([p[0] - centre[0], p[1] - centre[1]], -yaw);
    let dx = local[0].abs() - half[0];
    let dy = local[1].abs() - half[1];
    if dx >= dy {
        (dx, [local[0].signum(), 0.0])
    } else {
        (dy, [0.0, local[1].signum()])
    }
}
