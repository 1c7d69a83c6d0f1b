use serde::{Deserialize, Serialize};

/// Piecewise-constant ground height along x.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Terrain {
    /// `(x_start, height)` pairs, sorted by `x_start`. Ground is 0 before the first.
    pub steps: Vec<(f64, f64)>,
}

impl Terrain {
    pub fn flat() -> Self {
        Self::default()
    }

    pub fn step_up(x_start: f64, height: f64) -> Self {
        Self { steps: vec![(x_start, height)] }
    }

    pub fn height(&self, x: f64) -> f64 {
        self.steps.iter().rev().find(|(x0, _)| x >= *x0).map_or(0.0, |&(_, h)| h)
    }
}

/// Constant external force on the center of mass over a time window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Push {
    /// Force components (x, y, z) in N.
    pub force: [f64; 3],
    pub start: f64,
    pub duration: f64,
}

impl Push {
    pub fn at(&self, t: f64) -> [f64; 3] {
        if t >= self.start && t < self.start + self.duration {
            self.force
        } else {
            [0.0; 3]
        }
    }

    pub fn breakpoints(&self) -> [f64; 2] {
        [self.start, self.start + self.duration]
    }
}

/// External conditions shared by all models.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Environment {
    pub terrain: Terrain,
    pub pushes: Vec<Push>,
    breakpoints: Vec<f64>,
}

impl Environment {
    pub fn new(terrain: Terrain, pushes: Vec<Push>) -> Self {
        let mut breakpoints: Vec<f64> = pushes.iter().flat_map(|p| p.breakpoints()).collect();
        breakpoints.sort_by(f64::total_cmp);
        breakpoints.dedup();
        Self { terrain, pushes, breakpoints }
    }

    pub fn external_force(&self, t: f64) -> [f64; 3] {
        self.pushes.iter().fold([0.0; 3], |acc, p| {
            let f = p.at(t);
            [acc[0] + f[0], acc[1] + f[1], acc[2] + f[2]]
        })
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn terrain_is_piecewise_constant() {
        let t = Terrain::step_up(1.0, 0.12);
        assert_eq!(t.height(0.99), 0.0);
        assert_eq!(t.height(1.0), 0.12);
        assert_eq!(t.height(5.0), 0.12);
    }

    #[test]
    fn push_window_is_half_open() {
        let env = Environment::new(Terrain::flat(), vec![Push { force: [10.0, 0.0, 0.0], start: 1.0, duration: 0.1 }]);
        assert_eq!(env.external_force(0.999)[0], 0.0);
        assert_eq!(env.external_force(1.0)[0], 10.0);
        assert_eq!(env.external_force(1.1)[0], 0.0);
        assert_eq!(env.breakpoints(), &[1.0, 1.1]);
    }
}
