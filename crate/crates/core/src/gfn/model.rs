use std::io::{Read, Write};

use crate::conditioning::encoding_width;
use crate::env::GridSpec;
use crate::error::{Error, Result};
use crate::nnet::Mlp;

use super::{state_encoding_width, TrainConfig};

/// Forward policy `P_F(a | s, c)` and conditional log-partition `log Z(c)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GfnModel {
    pub policy: Mlp,
    pub log_z: Mlp,
}

impl GfnModel {
    pub fn new(grid: &GridSpec, cfg: &TrainConfig, seed: u64) -> Result<Self> {
        let cond = encoding_width(grid.objectives);
        let hidden = vec![cfg.hidden_units; cfg.hidden_layers];
        let policy_sizes: Vec<usize> = std::iter::once(state_encoding_width(grid) + cond)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(grid.num_actions()))
            .collect();
        let z_sizes: Vec<usize> = std::iter::once(cond)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(1))
            .collect();
        Ok(GfnModel {
            policy: Mlp::new(&policy_sizes, seed)?,
            log_z: Mlp::new(&z_sizes, seed.wrapping_add(0x9e37_79b9_7f4a_7c15))?,
        })
    }

    /// Checks that the networks fit `grid`.
    pub fn check_shapes(&self, grid: &GridSpec) -> Result<()> {
        let cond = encoding_width(grid.objectives);
        let want_in = state_encoding_width(grid) + cond;
        if self.policy.input_dim() != want_in {
            return Err(Error::Dimension {
                context: "policy input",
                expected: want_in,
                got: self.policy.input_dim(),
            });
        }
        if self.policy.output_dim() != grid.num_actions() {
            return Err(Error::Dimension {
                context: "policy logits",
                expected: grid.num_actions(),
                got: self.policy.output_dim(),
            });
        }
        if self.log_z.input_dim() != cond || self.log_z.output_dim() != 1 {
            return Err(Error::Dimension {
                context: "log Z network",
                expected: cond,
                got: self.log_z.input_dim(),
            });
        }
        Ok(())
    }

    pub fn log_z_of(&self, encoding: &[f64]) -> Result<f64> {
        Ok(self.log_z.forward(encoding)?.0[0])
    }

    pub fn write<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        self.policy.write_params(w)?;
        self.log_z.write_params(w)
    }

    pub fn read<R: Read>(r: &mut R) -> Result<Self> {
        Ok(GfnModel {
            policy: Mlp::read_params(r)?,
            log_z: Mlp::read_params(r)?,
        })
    }
}
