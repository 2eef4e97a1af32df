//! Data-placement planning: tile shape, tile order, CR degree, split-K,
//! scale-factor interleaving and the physical placement map.

mod degree;
mod geometry;
pub mod manifest;
mod order;
mod placement;
mod rearrange;
mod scales;
mod shape;
mod split;

pub use degree::get_cro_max_degree;
pub use geometry::{Geometry, WordInfo};
pub use order::{column_order, cr_spread_of, get_tile_cr_order, inverse, is_permutation, row_order};
pub use placement::{
    build_placement_map, BankLayout, Burst, LocalTile, PlacementMap, RowComposition, ScaleEvent, TileCoord, NO_EVENT,
};
pub use rearrange::{pack_image, rearrange_matrix, restore_matrix, PlacedImage};
pub use scales::{interleave_scale_factors, ScaleLayout};
pub use shape::{get_param, get_param_for, get_tile_shape, ShapeExit, TileShape};
pub use split::{apply_split_k, SplitK, SubProblem};

use serde::{Deserialize, Serialize};

use crate::config::{elements_per_tile, IntraTileOrder, Knobs, LayoutKind, MemoryConfig, PimConfig, SystemConfig};
use crate::error::{Error, Result};
use crate::problem::GemvProblem;

/// The chosen tiling and register split for one (sub-)problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TilePlan {
    pub m_tile: usize,
    pub k_tile: usize,
    /// Input and output registers per tile as the tile-shape search counts them.
    pub in_reg: usize,
    pub out_reg: usize,
    /// Registers one row-block occupies while accumulating (lane partials included).
    pub acc_regs: usize,
    /// Registers given to input-vector words.
    pub iv_regs: usize,
    pub cr_degree: usize,
    pub split_k_degree: usize,
    pub intra_tile_order: IntraTileOrder,
    pub layout: LayoutKind,
    pub exit: ShapeExit,
}

impl TilePlan {
    /// Registers the orchestration keeps live at once.
    pub fn register_demand(&self) -> usize {
        self.iv_regs.max(self.in_reg) + self.cr_degree * self.acc_regs
    }
}

/// Picks tile shape, register split and CR degree for a problem mapped onto
/// every bank of `mem`.
pub fn plan_tiles(p: &GemvProblem, mem: &MemoryConfig, pim: &PimConfig, knobs: &Knobs, split_k_degree: usize) -> Result<TilePlan> {
    let elem = elements_per_tile(mem, &p.in_fmt)?;
    let shape = match knobs.layout {
        LayoutKind::Planned => get_tile_shape(p, mem, pim)?,
        LayoutKind::ColumnMajor => TileShape { m_tile: elem, k_tile: 1, exit: ShapeExit::Fixed },
        LayoutKind::RowMajor => TileShape { m_tile: 1, k_tile: elem, exit: ShapeExit::Fixed },
    };
    let (in_reg, out_reg) = get_param_for(p, mem, pim, shape.m_tile, shape.k_tile);
    let geo = Geometry::new(p, mem, pim, shape.m_tile, shape.k_tile);
    let tot_reg = pim.regs_per_alu;

    let (acc_regs, min_acc) = (geo.acc_regs(), geo.regs_per_unit);
    let reserve = if knobs.layout == LayoutKind::Planned { acc_regs } else { min_acc };
    if reserve >= tot_reg {
        return Err(Error::Planner(format!(
            "{tot_reg} registers cannot hold {reserve} accumulator registers plus input"
        )));
    }
    let iv_regs = knobs.iv_regs_for(pim).min(tot_reg - reserve);

    let cr_degree = match knobs.layout {
        LayoutKind::Planned => {
            let in_eff = in_reg.max(iv_regs);
            let best = get_cro_max_degree(p.m, shape.m_tile, mem.total_banks(), in_eff, acc_regs, tot_reg);
            match knobs.cr_degree {
                None => best,
                Some(0) => return Err(Error::Planner("CR degree must be positive".into())),
                Some(d) => {
                    let rowblk = (p.m / (shape.m_tile * mem.total_banks())).max(1);
                    d.min(rowblk)
                }
            }
        }
        _ => 1,
    };
    let plan = TilePlan {
        m_tile: shape.m_tile,
        k_tile: shape.k_tile,
        in_reg,
        out_reg,
        acc_regs,
        iv_regs,
        cr_degree,
        split_k_degree,
        intra_tile_order: knobs.intra_tile_order,
        layout: knobs.layout,
        exit: shape.exit,
    };
    validate_plan(&plan, p, mem, pim)?;
    Ok(plan)
}

/// Checks structural plan invariants; baseline layouts are exempt from the
/// register budget since they spill accumulators instead.
pub fn validate_plan(plan: &TilePlan, p: &GemvProblem, mem: &MemoryConfig, pim: &PimConfig) -> Result<()> {
    let elem = elements_per_tile(mem, &p.in_fmt)?;
    if plan.m_tile * plan.k_tile != elem {
        return Err(Error::Planner(format!(
            "tile {}x{} does not fill {elem} elements",
            plan.m_tile, plan.k_tile
        )));
    }
    if plan.split_k_degree == 0 || !plan.split_k_degree.is_power_of_two() {
        return Err(Error::Planner("split-K degree must be a power of two".into()));
    }
    if plan.cr_degree == 0 || plan.iv_regs == 0 {
        return Err(Error::Planner("CR degree and IV registers must be positive".into()));
    }
    if plan.layout == LayoutKind::Planned && plan.register_demand() > pim.regs_per_alu {
        return Err(Error::Planner(format!(
            "register budget exceeded: {} IV + {} x {} accumulator registers > {}",
            plan.iv_regs.max(plan.in_reg),
            plan.cr_degree,
            plan.acc_regs,
            pim.regs_per_alu
        )));
    }
    Ok(())
}

/// One split-K slice with its plan and placement.
#[derive(Debug, Clone)]
pub struct PlannedPart {
    pub sub: SubProblem,
    /// Memory system seen by this slice (its channel subset).
    pub mem: MemoryConfig,
    pub plan: TilePlan,
    pub map: PlacementMap,
}

/// A complete placement of a GEMV, possibly split along K.
#[derive(Debug, Clone)]
pub struct PlannedGemv {
    pub problem: GemvProblem,
    pub split_k: usize,
    pub parts: Vec<PlannedPart>,
}

/// Plans and places `p` under `cfg`, including split-K slicing.
pub fn plan_gemv(p: &GemvProblem, cfg: &SystemConfig) -> Result<PlannedGemv> {
    p.validate()?;
    let split = apply_split_k(p, &cfg.memory, cfg.knobs.split_k)?;
    let mut parts = Vec::with_capacity(split.degree);
    for sub in split.parts {
        let mem = MemoryConfig { num_channels: sub.channels.len(), ..cfg.memory.clone() };
        let plan = plan_tiles(&sub.problem, &mem, &cfg.pim, &cfg.knobs, split.degree)?;
        let map = build_placement_map(&sub.problem, &plan, &mem, &cfg.pim, sub.channels.start)?;
        parts.push(PlannedPart { sub, mem, plan, map });
    }
    Ok(PlannedGemv { problem: *p, split_k: split.degree, parts })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_plans() {
        let mem = MemoryConfig::default();
        let pim = PimConfig::default();
        let knobs = Knobs::default();
        let plan = plan_tiles(&GemvProblem::int8(4096, 4096), &mem, &pim, &knobs, 1).unwrap();
        assert_eq!((plan.m_tile, plan.k_tile, plan.iv_regs, plan.cr_degree), (32, 8, 8, 1));
        // Three row-blocks of 32 per bank; 3 x 2 + 8 registers fit.
        let plan = plan_tiles(&GemvProblem::int8(12288, 4096), &mem, &pim, &knobs, 1).unwrap();
        assert_eq!((plan.m_tile, plan.cr_degree), (32, 3));
        let plan = plan_tiles(&GemvProblem::int8(768, 768), &mem, &pim, &knobs, 1).unwrap();
        assert_eq!((plan.m_tile, plan.acc_regs, plan.cr_degree), (2, 2, 3));
        assert!(plan.register_demand() <= 16);
    }

    #[test]
    fn fixed_degree_over_budget_is_rejected() {
        let mem = MemoryConfig::default();
        let pim = PimConfig::default();
        let knobs = Knobs { cr_degree: Some(8), ..Knobs::default() };
        let err = plan_tiles(&GemvProblem::int8(32768, 256), &mem, &pim, &knobs, 1).unwrap_err();
        assert!(err.to_string().contains("register budget"), "{err}");
    }

    #[test]
    fn iv_registers_are_clamped_to_fit() {
        let mem = MemoryConfig::default();
        let pim = PimConfig::default();
        let knobs = Knobs { iv_regs: Some(15), ..Knobs::default() };
        let plan = plan_tiles(&GemvProblem::int8(4096, 4096), &mem, &pim, &knobs, 1).unwrap();
        assert_eq!(plan.iv_regs, 14);
    }
}
