//! Placement manifest: plan header plus tile → (channel, bank, row, column).
//!
//! Two encodings: JSON, and a compact little-endian binary form starting
//! with the magic `PIMPLC01` followed by `u32` fields.

use serde::{Deserialize, Serialize};

use super::placement::{PlacementMap, TileCoord};
use super::shape::ShapeExit;
use super::TilePlan;
use crate::config::{DataFormat, IntraTileOrder, LayoutKind};
use crate::error::{Error, Result};
use crate::problem::GemvProblem;

pub const MAGIC: &[u8; 8] = b"PIMPLC01";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestTile {
    /// Row-order tile index.
    pub tile: u32,
    pub channel: u32,
    pub bank: u32,
    pub row: u32,
    pub col: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub problem: GemvProblem,
    pub plan: TilePlan,
    pub m_tm: u32,
    pub k_tm: u32,
    pub channel_offset: u32,
    pub num_channels: u32,
    pub banks_per_channel: u32,
    /// In placement order.
    pub tiles: Vec<ManifestTile>,
}

impl Manifest {
    pub fn from_map(p: &GemvProblem, plan: &TilePlan, map: &PlacementMap) -> Self {
        let tiles = map
            .tile_order
            .iter()
            .map(|&t| {
                let c = map.tile_coords[t as usize];
                ManifestTile { tile: t, channel: c.channel, bank: c.bank, row: c.row, col: c.col }
            })
            .collect();
        Self {
            version: VERSION,
            problem: *p,
            plan: *plan,
            m_tm: map.m_tm as u32,
            k_tm: map.k_tm as u32,
            channel_offset: map.channel_offset as u32,
            num_channels: map.num_channels as u32,
            banks_per_channel: map.banks_per_channel as u32,
            tiles,
        }
    }

    /// Structural checks shared by both decoders.
    pub fn validate(&self) -> Result<()> {
        if self.version != VERSION {
            return Err(Error::Decode(format!("unsupported manifest version {}", self.version)));
        }
        self.problem.validate().map_err(|e| Error::Decode(e.to_string()))?;
        let n = self.m_tm as usize * self.k_tm as usize;
        if self.tiles.len() != n {
            return Err(Error::Decode(format!("{} tiles listed, grid has {n}", self.tiles.len())));
        }
        let mut seen = vec![false; n];
        for t in &self.tiles {
            let i = t.tile as usize;
            if i >= n || seen[i] {
                return Err(Error::Decode(format!("tile {i} out of range or repeated")));
            }
            seen[i] = true;
            let ch = t.channel.checked_sub(self.channel_offset);
            if ch.is_none_or(|c| c >= self.num_channels) || t.bank >= self.banks_per_channel {
                return Err(Error::Decode(format!("tile {i} placed outside the channel subset")));
            }
        }
        Ok(())
    }

    /// Fails unless `map` places every tile exactly where the manifest says.
    pub fn check_against(&self, map: &PlacementMap) -> Result<()> {
        if map.m_tm != self.m_tm as usize || map.k_tm != self.k_tm as usize {
            return Err(Error::Planner("manifest tile grid differs from placement".into()));
        }
        for t in &self.tiles {
            let want = TileCoord { channel: t.channel, bank: t.bank, row: t.row, col: t.col };
            if map.tile_coords.get(t.tile as usize) != Some(&want) {
                return Err(Error::Planner(format!("tile {} placed differently", t.tile)));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Manifest = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let p = &self.problem;
        let plan = &self.plan;
        let header = [
            self.version,
            p.m as u32,
            p.k as u32,
            p.in_fmt.bits,
            p.in_fmt.sf_block.unwrap_or(0),
            p.in_fmt.sf_bits,
            p.out_fmt.bits,
            plan.m_tile as u32,
            plan.k_tile as u32,
            plan.in_reg as u32,
            plan.out_reg as u32,
            plan.acc_regs as u32,
            plan.iv_regs as u32,
            plan.cr_degree as u32,
            plan.split_k_degree as u32,
            order_code(plan.intra_tile_order),
            layout_code(plan.layout),
            exit_code(plan.exit),
            self.m_tm,
            self.k_tm,
            self.channel_offset,
            self.num_channels,
            self.banks_per_channel,
            self.tiles.len() as u32,
        ];
        let mut out = Vec::with_capacity(MAGIC.len() + 4 * (header.len() + 5 * self.tiles.len()));
        out.extend_from_slice(MAGIC);
        for v in header {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for t in &self.tiles {
            for v in [t.tile, t.channel, t.bank, t.row, t.col] {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let body = bytes
            .strip_prefix(MAGIC.as_slice())
            .ok_or_else(|| Error::Decode("missing manifest magic".into()))?;
        let mut r = Reader { bytes: body };
        let version = r.u32()?;
        let (m, k) = (r.u32()? as usize, r.u32()? as usize);
        let in_bits = r.u32()?;
        let sf_block = match r.u32()? {
            0 => None,
            b => Some(b),
        };
        let sf_bits = r.u32()?;
        let out_bits = r.u32()?;
        let problem = GemvProblem {
            m,
            k,
            in_fmt: DataFormat { bits: in_bits, sf_block, sf_bits },
            out_fmt: DataFormat { bits: out_bits, sf_block: None, sf_bits: 8 },
        };
        let plan = TilePlan {
            m_tile: r.u32()? as usize,
            k_tile: r.u32()? as usize,
            in_reg: r.u32()? as usize,
            out_reg: r.u32()? as usize,
            acc_regs: r.u32()? as usize,
            iv_regs: r.u32()? as usize,
            cr_degree: r.u32()? as usize,
            split_k_degree: r.u32()? as usize,
            intra_tile_order: match r.u32()? {
                0 => IntraTileOrder::ColumnMajor,
                1 => IntraTileOrder::RowMajor,
                c => return Err(Error::Decode(format!("bad intra-tile order {c}"))),
            },
            layout: match r.u32()? {
                0 => LayoutKind::Planned,
                1 => LayoutKind::ColumnMajor,
                2 => LayoutKind::RowMajor,
                c => return Err(Error::Decode(format!("bad layout {c}"))),
            },
            exit: match r.u32()? {
                0 => ShapeExit::EvenDistribution,
                1 => ShapeExit::RegisterFallback,
                2 => ShapeExit::RowVectorFallback,
                3 => ShapeExit::Fixed,
                c => return Err(Error::Decode(format!("bad shape exit {c}"))),
            },
        };
        let (m_tm, k_tm) = (r.u32()?, r.u32()?);
        let (channel_offset, num_channels, banks_per_channel) = (r.u32()?, r.u32()?, r.u32()?);
        let n = r.u32()? as usize;
        if r.bytes.len() != n * 20 {
            return Err(Error::Decode(format!("expected {n} tile records, found {} bytes", r.bytes.len())));
        }
        let mut tiles = Vec::with_capacity(n);
        for _ in 0..n {
            tiles.push(ManifestTile { tile: r.u32()?, channel: r.u32()?, bank: r.u32()?, row: r.u32()?, col: r.u32()? });
        }
        let out = Self { version, problem, plan, m_tm, k_tm, channel_offset, num_channels, banks_per_channel, tiles };
        out.validate()?;
        Ok(out)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl Reader<'_> {
    fn u32(&mut self) -> Result<u32> {
        let (head, rest) = self
            .bytes
            .split_first_chunk::<4>()
            .ok_or_else(|| Error::Decode("truncated manifest".into()))?;
        self.bytes = rest;
        Ok(u32::from_le_bytes(*head))
    }
}

fn order_code(o: IntraTileOrder) -> u32 {
    match o {
        IntraTileOrder::ColumnMajor => 0,
        IntraTileOrder::RowMajor => 1,
    }
}

fn layout_code(l: LayoutKind) -> u32 {
    match l {
        LayoutKind::Planned => 0,
        LayoutKind::ColumnMajor => 1,
        LayoutKind::RowMajor => 2,
    }
}

fn exit_code(e: ShapeExit) -> u32 {
    match e {
        ShapeExit::EvenDistribution => 0,
        ShapeExit::RegisterFallback => 1,
        ShapeExit::RowVectorFallback => 2,
        ShapeExit::Fixed => 3,
    }
}
