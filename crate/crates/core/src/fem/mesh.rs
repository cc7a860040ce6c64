use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub center: [f64; 2],
    pub radius: f64,
}

/// Square periodic unit cell meshed with a structured `divisions × divisions`
/// grid of bilinear quadrilaterals.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryConfig {
    pub size: f64,
    pub divisions: usize,
    pub particles: Vec<Particle>,
}

impl GeometryConfig {
    /// Single-phase cell.
    pub fn plain(size: f64, divisions: usize) -> Self {
        Self {
            size,
            divisions,
            particles: Vec::new(),
        }
    }

    /// Unit cell with three circular inclusions covering about 20% of the area.
    pub fn default_rve(divisions: usize) -> Self {
        Self {
            size: 1.0,
            divisions,
            particles: vec![
                Particle {
                    center: [0.30, 0.32],
                    radius: 0.16,
                },
                Particle {
                    center: [0.74, 0.42],
                    radius: 0.14,
                },
                Particle {
                    center: [0.46, 0.76],
                    radius: 0.135,
                },
            ],
        }
    }

    pub fn particle_area_fraction(&self) -> f64 {
        self.particles
            .iter()
            .map(|p| std::f64::consts::PI * p.radius * p.radius)
            .sum::<f64>()
            / (self.size * self.size)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Matrix,
    Particle,
}

/// `u_slave − u_master = (U − I)·offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pairing {
    pub slave: usize,
    pub master: usize,
    pub offset: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadRule {
    pub points: [[f64; 2]; 4],
    pub weights: [f64; 4],
}

impl QuadRule {
    pub fn gauss_2x2() -> Self {
        let g = 1.0 / 3f64.sqrt();
        Self {
            points: [[-g, -g], [g, -g], [g, g], [-g, g]],
            weights: [1.0; 4],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicMesh {
    pub size: f64,
    pub nodes: Vec<[f64; 2]>,
    /// Counter-clockwise node ids.
    pub elements: Vec<[usize; 4]>,
    pub quad_rule: QuadRule,
    pub pairings: Vec<Pairing>,
    /// Bottom-left, bottom-right, top-right, top-left.
    pub corners: [usize; 4],
    pub phases: Vec<Phase>,
}

pub const QUAD_POINTS_PER_ELEMENT: usize = 4;

impl PeriodicMesh {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_dofs(&self) -> usize {
        2 * self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn n_quad_points(&self) -> usize {
        QUAD_POINTS_PER_ELEMENT * self.elements.len()
    }

    pub fn corner_dofs(&self) -> [usize; 8] {
        let c = self.corners;
        [
            2 * c[0],
            2 * c[0] + 1,
            2 * c[1],
            2 * c[1] + 1,
            2 * c[2],
            2 * c[2] + 1,
            2 * c[3],
            2 * c[3] + 1,
        ]
    }

    /// SHA-256 over node coordinates, connectivity and phases.
    pub fn fingerprint(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"mesh");
        h.update((self.nodes.len() as u64).to_le_bytes());
        for x in &self.nodes {
            h.update(x[0].to_le_bytes());
            h.update(x[1].to_le_bytes());
        }
        h.update((self.elements.len() as u64).to_le_bytes());
        for (e, phase) in self.elements.iter().zip(&self.phases) {
            for &n in e {
                h.update((n as u64).to_le_bytes());
            }
            h.update([matches!(phase, Phase::Particle) as u8]);
        }
        h.finalize().into()
    }

    /// Checks pairing coverage, lattice offsets and element orientation.
    pub fn validate(&self) -> Result<()> {
        let tol = 1e-12 * self.size;
        let mut seen = vec![0usize; self.nodes.len()];
        for p in &self.pairings {
            seen[p.slave] += 1;
            seen[p.master] += 1;
            let d = [
                self.nodes[p.slave][0] - self.nodes[p.master][0],
                self.nodes[p.slave][1] - self.nodes[p.master][1],
            ];
            if (d[0] - p.offset[0]).abs() > tol || (d[1] - p.offset[1]).abs() > tol {
                return Err(Error::InvalidConfig(format!(
                    "pairing {p:?} is not a lattice translation"
                )));
            }
            let o = p.offset;
            let lattice = (o[0].abs() - self.size).abs() < tol && o[1].abs() < tol
                || (o[1].abs() - self.size).abs() < tol && o[0].abs() < tol;
            if !lattice {
                return Err(Error::InvalidConfig(format!(
                    "pairing offset {o:?} is not a lattice vector"
                )));
            }
        }
        for (a, x) in self.nodes.iter().enumerate() {
            let on_boundary = x
                .iter()
                .any(|&c| c.abs() < tol || (c - self.size).abs() < tol);
            let corner = self.corners.contains(&a);
            let expected = usize::from(on_boundary && !corner);
            if seen[a] != expected {
                return Err(Error::InvalidConfig(format!(
                    "node {a} at {x:?} appears in {} pairings, expected {expected}",
                    seen[a]
                )));
            }
        }
        for e in 0..self.elements.len() {
            let geom = super::element::ElementGeometry::new(self, e)?;
            if geom.weights.iter().any(|&w| !(w > 0.0)) {
                return Err(Error::InvalidConfig(format!(
                    "element {e} has a non-positive Jacobian"
                )));
            }
        }
        Ok(())
    }
}

fn periodic_distance(a: [f64; 2], b: [f64; 2], size: f64) -> f64 {
    let wrap = |d: f64| d - size * (d / size).round();
    wrap(a[0] - b[0]).hypot(wrap(a[1] - b[1]))
}

/// Structured periodic mesh. Elements whose centroid lies inside a particle
/// (with periodic wrapping) take the particle phase.
pub fn build_rve_mesh(config: &GeometryConfig) -> Result<PeriodicMesh> {
    let n = config.divisions;
    let size = config.size;
    if n < 1 || !(size > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "need at least one division and a positive size, got {n} and {size}"
        )));
    }
    let h = size / n as f64;
    for p in &config.particles {
        if !(p.radius > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "particle radius must be positive: {p:?}"
            )));
        }
        // Corner nodes are pinned to the homogeneous field; a particle
        // covering them would make every corner element stiff.
        if periodic_distance(p.center, [0.0, 0.0], size) <= p.radius + 0.5 * h {
            return Err(Error::InvalidConfig(format!(
                "particle {p:?} overlaps the corner node region"
            )));
        }
    }

    let id = |i: usize, j: usize| i + j * (n + 1);
    let mut nodes = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            nodes.push([i as f64 * h, j as f64 * h]);
        }
    }
    let mut elements = Vec::with_capacity(n * n);
    let mut phases = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            elements.push([id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]);
            let centroid = [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h];
            let in_particle = config
                .particles
                .iter()
                .any(|p| periodic_distance(centroid, p.center, size) < p.radius);
            phases.push(if in_particle {
                Phase::Particle
            } else {
                Phase::Matrix
            });
        }
    }

    let mut pairings = Vec::with_capacity(2 * n.saturating_sub(1));
    for j in 1..n {
        pairings.push(Pairing {
            slave: id(n, j),
            master: id(0, j),
            offset: [size, 0.0],
        });
    }
    for i in 1..n {
        pairings.push(Pairing {
            slave: id(i, n),
            master: id(i, 0),
            offset: [0.0, size],
        });
    }

    let mesh = PeriodicMesh {
        size,
        nodes,
        elements,
        quad_rule: QuadRule::gauss_2x2(),
        pairings,
        corners: [id(0, 0), id(n, 0), id(n, n), id(0, n)],
        phases,
    };
    mesh.validate()?;
    Ok(mesh)
}
