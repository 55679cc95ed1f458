//! Bundled environments.

mod cosine;
mod kuba;
mod particle;
mod triangle;

use serde::{Deserialize, Serialize};

pub use cosine::{CosineMode, CosineToyMG, COSINE_DISCOUNT};
pub use kuba::{kuba_game, kuba_observations};
pub use particle::{write_trajectory_csv, NavStep, ParticleNav, ParticleNavConfig, TrajectoryRow};
pub use triangle::{triangle_game, triangle_observations, triangle_reward, Move, Shape, POSITIONS};

use crate::error::{Error, Result};
use crate::mg_core::{FiniteMG, ObservationMap};

/// Registered environment names.
pub const ENV_NAMES: [&str; 4] = ["triangle", "kuba", "cosine", "particle-nav"];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnvParams {
    pub n: Option<usize>,
    pub k: Option<usize>,
    pub mode: Option<CosineMode>,
}

/// A constructed environment.
#[derive(Debug, Clone)]
pub enum Env {
    Finite { mg: FiniteMG, obs: ObservationMap },
    Continuous(ParticleNav),
}

/// Builds a registered environment by name.
pub fn build(name: &str, params: &EnvParams) -> Result<Env> {
    match name {
        "triangle" => {
            if params.n.is_some_and(|n| n != 3) {
                return Err(Error::InvalidParam("the triangle game has exactly 3 agents".into()));
            }
            let mg = triangle_game()?;
            let obs = triangle_observations(&mg)?;
            Ok(Env::Finite { mg, obs })
        }
        "kuba" => {
            let mg = kuba_game(params.n.unwrap_or(2))?;
            let obs = kuba_observations(&mg)?;
            Ok(Env::Finite { mg, obs })
        }
        "cosine" => {
            let game = CosineToyMG::new(
                params.n.unwrap_or(3),
                params.mode.unwrap_or(CosineMode::OneStep),
            )?;
            let mg = game.to_finite_mg()?;
            let obs = game.observations(&mg)?;
            Ok(Env::Finite { mg, obs })
        }
        "particle-nav" => {
            let cfg = ParticleNavConfig::with_agents(params.n.unwrap_or(6), params.k.unwrap_or(3));
            Ok(Env::Continuous(ParticleNav::new(cfg)?))
        }
        other => Err(Error::InvalidParam(format!(
            "unknown environment '{other}' (known: {})",
            ENV_NAMES.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_builds_every_env() {
        for name in ENV_NAMES {
            build(name, &EnvParams::default()).unwrap();
        }
        assert!(build("nope", &EnvParams::default()).is_err());
        assert!(build("kuba", &EnvParams { n: Some(3), ..EnvParams::default() }).is_err());
    }

    #[test]
    fn kuba_four_agents() {
        let Env::Finite { mg, .. } = build("kuba", &EnvParams { n: Some(4), ..EnvParams::default() }).unwrap() else {
            panic!("expected a finite game");
        };
        assert_eq!(mg.reachable_states().len(), 1);
        assert_eq!(mg.n_joint_actions(), 16);
    }
}
