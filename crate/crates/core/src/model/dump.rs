use std::io::{BufRead, Read, Write};

use crate::error::{Error, Result};
use crate::model::Document;

pub const MAGIC: &[u8; 4] = b"AWAT";
pub const VERSION: u16 = 1;

/// Attention weights of one (layer, head): a local band plus the rows and
/// columns of the global tokens.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadAttention {
    /// `n_tokens × (2·window + 1)`, slot `k` of row `i` holds key `i − window + k`.
    band: Vec<f32>,
    /// `n_global × n_tokens`.
    global_rows: Vec<f32>,
    /// `n_tokens × n_global`.
    global_cols: Vec<f32>,
}

/// Banded local attention with global rows/columns for every (layer, head).
///
/// Storage is `O(n_tokens × window)` per head for the band. Lookups route
/// through [`HeadView::weight`]: a global source reads its global row, a
/// global destination reads the global column, everything else reads the
/// band.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionDump {
    n_layers: u16,
    n_heads: u16,
    n_tokens: u32,
    window: u32,
    global_positions: Vec<u32>,
    // token -> index into global_positions
    global_index: Vec<Option<u32>>,
    heads: Vec<HeadAttention>,
}

impl AttentionDump {
    /// A zero-filled dump.
    pub fn zeros(
        n_layers: u16,
        n_heads: u16,
        n_tokens: u32,
        window: u32,
        global_positions: Vec<u32>,
    ) -> Result<Self> {
        let global_index = build_global_index(n_tokens, &global_positions)?;
        let n = n_tokens as usize;
        let g = global_positions.len();
        let width = 2 * window as usize + 1;
        let heads = (0..n_layers as usize * n_heads as usize)
            .map(|_| HeadAttention {
                band: vec![0.0; n * width],
                global_rows: vec![0.0; g * n],
                global_cols: vec![0.0; n * g],
            })
            .collect();
        Ok(AttentionDump {
            n_layers,
            n_heads,
            n_tokens,
            window,
            global_positions,
            global_index,
            heads,
        })
    }

    /// A zero-filled dump laid out for `doc`.
    pub fn zeros_for(doc: &Document, n_layers: u16, n_heads: u16, window: u32) -> Result<Self> {
        let globals = doc.global_positions().iter().map(|&g| g as u32).collect();
        Self::zeros(n_layers, n_heads, doc.n_tokens() as u32, window, globals)
    }

    pub fn n_layers(&self) -> usize {
        self.n_layers as usize
    }

    pub fn n_heads(&self) -> usize {
        self.n_heads as usize
    }

    pub fn n_tokens(&self) -> usize {
        self.n_tokens as usize
    }

    pub fn window(&self) -> usize {
        self.window as usize
    }

    pub fn global_positions(&self) -> &[u32] {
        &self.global_positions
    }

    /// All (layer, head) pairs in layer-outer order.
    pub fn layer_heads(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n_layers()).flat_map(move |l| (0..self.n_heads()).map(move |h| (l, h)))
    }

    pub fn head(&self, layer: usize, head: usize) -> Result<HeadView<'_>> {
        if layer >= self.n_layers() || head >= self.n_heads() {
            return Err(Error::OutOfRange(format!(
                "layer/head ({layer}, {head}) outside {}x{}",
                self.n_layers, self.n_heads
            )));
        }
        Ok(HeadView {
            dump: self,
            data: &self.heads[layer * self.n_heads() + head],
        })
    }

    /// Stored weight from `src` to `dst`, or `None` when neither the band
    /// nor a global row/column holds an entry for the pair.
    pub fn attention_weight(
        &self,
        layer: usize,
        head: usize,
        src: usize,
        dst: usize,
    ) -> Result<Option<f32>> {
        let view = self.head(layer, head)?;
        if src >= self.n_tokens() || dst >= self.n_tokens() {
            return Err(Error::OutOfRange(format!(
                "token pair ({src}, {dst}) outside {} tokens",
                self.n_tokens
            )));
        }
        Ok(view.weight(src, dst))
    }

    /// Writes the weight of an existing entry.
    pub fn set_weight(
        &mut self,
        layer: usize,
        head: usize,
        src: usize,
        dst: usize,
        weight: f32,
    ) -> Result<()> {
        self.head(layer, head)?;
        let n = self.n_tokens();
        if src >= n || dst >= n {
            return Err(Error::OutOfRange(format!(
                "token pair ({src}, {dst}) outside {n} tokens"
            )));
        }
        let g = self.global_positions.len();
        let w = self.window();
        let src_g = self.global_index[src];
        let dst_g = self.global_index[dst];
        let idx = layer * self.n_heads() + head;
        let data = &mut self.heads[idx];
        if let Some(gi) = src_g {
            data.global_rows[gi as usize * n + dst] = weight;
        } else if let Some(gj) = dst_g {
            data.global_cols[src * g + gj as usize] = weight;
        } else if src.abs_diff(dst) <= w {
            data.band[src * (2 * w + 1) + dst + w - src] = weight;
        } else {
            return Err(Error::OutOfRange(format!(
                "no attention entry for ({src}, {dst}) with window {w}"
            )));
        }
        Ok(())
    }

    pub(crate) fn raw_heads(&self) -> &[HeadAttention] {
        &self.heads
    }

    /// Fails unless the dump's token count and global layout match `doc`.
    pub fn check_against(&self, doc: &Document) -> Result<()> {
        if self.n_tokens() != doc.n_tokens() {
            return Err(Error::DimensionMismatch(format!(
                "dump declares {} tokens, document `{}` has {}",
                self.n_tokens,
                doc.doc_id(),
                doc.n_tokens()
            )));
        }
        let same = self.global_positions.len() == doc.global_positions().len()
            && self
                .global_positions
                .iter()
                .zip(doc.global_positions())
                .all(|(&a, &b)| a as usize == b);
        if !same {
            return Err(Error::DimensionMismatch(format!(
                "dump global positions {:?} differ from document `{}`",
                self.global_positions,
                doc.doc_id()
            )));
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut reader: R) -> Result<Self> {
        let mut bytes = Vec::new();
        reader.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    /// Reads a dump and checks it against its companion document.
    pub fn read_for<R: Read>(reader: R, doc: &Document) -> Result<Self> {
        let dump = Self::read_from(reader)?;
        dump.check_against(doc)?;
        Ok(dump)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = ByteCursor { bytes, pos: 0 };
        let magic: [u8; 4] = cur.take(4, "magic")?.try_into().unwrap();
        if &magic != MAGIC {
            return Err(Error::BadMagic(magic));
        }
        let version = cur.u16("version")?;
        if version != VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let n_layers = cur.u16("n_layers")?;
        let n_heads = cur.u16("n_heads")?;
        let n_tokens = cur.u32("n_tokens")?;
        let window = cur.u32("window")?;
        let n_global = cur.u32("n_global")? as usize;
        let mut global_positions = Vec::with_capacity(n_global.min(1 << 16));
        for _ in 0..n_global {
            global_positions.push(cur.u32("global position")?);
        }
        let global_index = build_global_index(n_tokens, &global_positions)?;

        let n = n_tokens as usize;
        let width = 2 * window as usize + 1;
        let n_pairs = n_layers as usize * n_heads as usize;
        let per_head = n
            .checked_mul(width)
            .and_then(|b| b.checked_add(2 * n_global * n))
            .and_then(|x| x.checked_mul(4))
            .ok_or_else(|| Error::Malformed("dump dimensions overflow".into()))?;
        let needed = per_head
            .checked_mul(n_pairs)
            .ok_or_else(|| Error::Malformed("dump dimensions overflow".into()))?;
        if cur.remaining() < needed {
            return Err(Error::Truncated(format!(
                "expected {needed} payload bytes, found {}",
                cur.remaining()
            )));
        }
        let mut heads = Vec::with_capacity(n_pairs);
        for _ in 0..n_pairs {
            let band = cur.f32s(n * width, "band")?;
            let global_rows = cur.f32s(n_global * n, "global rows")?;
            let global_cols = cur.f32s(n * n_global, "global cols")?;
            heads.push(HeadAttention {
                band,
                global_rows,
                global_cols,
            });
        }
        if cur.remaining() != 0 {
            return Err(Error::Malformed(format!(
                "{} trailing bytes after payload",
                cur.remaining()
            )));
        }
        Ok(AttentionDump {
            n_layers,
            n_heads,
            n_tokens,
            window,
            global_positions,
            global_index,
            heads,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.n_layers.to_le_bytes());
        out.extend_from_slice(&self.n_heads.to_le_bytes());
        out.extend_from_slice(&self.n_tokens.to_le_bytes());
        out.extend_from_slice(&self.window.to_le_bytes());
        out.extend_from_slice(&(self.global_positions.len() as u32).to_le_bytes());
        for g in &self.global_positions {
            out.extend_from_slice(&g.to_le_bytes());
        }
        for head in &self.heads {
            for block in [&head.band, &head.global_rows, &head.global_cols] {
                for w in block.iter() {
                    out.extend_from_slice(&w.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn write_to<W: Write>(&self, mut writer: W) -> Result<()> {
        writer.write_all(&self.to_bytes())?;
        Ok(())
    }

    /// Builds a dump from `layer, head, src, dst, weight` records (comma or
    /// whitespace separated, `#` starts a comment). Entries not listed stay
    /// zero; every listed pair must be representable in the band/global
    /// layout implied by `doc` and `window`.
    pub fn from_sparse_edges<R: BufRead>(reader: R, doc: &Document, window: u32) -> Result<Self> {
        let mut records = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let fields: Vec<&str> = body
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|f| !f.is_empty())
                .collect();
            let bad = || Error::Malformed(format!("sparse edge line {}: `{body}`", lineno + 1));
            if fields.len() != 5 {
                return Err(bad());
            }
            let ints: Vec<usize> = fields[..4]
                .iter()
                .map(|f| f.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad())?;
            let weight: f32 = fields[4].parse().map_err(|_| bad())?;
            records.push((ints[0], ints[1], ints[2], ints[3], weight));
        }
        let n_layers = records.iter().map(|r| r.0 + 1).max().unwrap_or(0);
        let n_heads = records.iter().map(|r| r.1 + 1).max().unwrap_or(0);
        let to_u16 = |v: usize| {
            u16::try_from(v)
                .map_err(|_| Error::Malformed(format!("layer/head count {v} too large")))
        };
        let mut dump = Self::zeros_for(doc, to_u16(n_layers)?, to_u16(n_heads)?, window)?;
        for (layer, head, src, dst, weight) in records {
            dump.set_weight(layer, head, src, dst, weight)?;
        }
        Ok(dump)
    }
}

fn build_global_index(n_tokens: u32, globals: &[u32]) -> Result<Vec<Option<u32>>> {
    let mut index = vec![None; n_tokens as usize];
    for (gi, &g) in globals.iter().enumerate() {
        if g >= n_tokens {
            return Err(Error::DimensionMismatch(format!(
                "global position {g} outside {n_tokens} tokens"
            )));
        }
        if gi > 0 && globals[gi - 1] >= g {
            return Err(Error::Malformed(
                "global positions must be strictly increasing".into(),
            ));
        }
        index[g as usize] = Some(gi as u32);
    }
    Ok(index)
}

/// Borrowed view of one (layer, head).
#[derive(Clone, Copy)]
pub struct HeadView<'a> {
    dump: &'a AttentionDump,
    data: &'a HeadAttention,
}

impl<'a> HeadView<'a> {
    pub fn window(&self) -> usize {
        self.dump.window()
    }

    pub fn n_tokens(&self) -> usize {
        self.dump.n_tokens()
    }

    pub fn global_slot(&self, token: usize) -> Option<usize> {
        self.dump.global_index[token].map(|g| g as usize)
    }

    /// Token indices are assumed in range.
    pub fn weight(&self, src: usize, dst: usize) -> Option<f32> {
        let n = self.n_tokens();
        let g = self.dump.global_positions.len();
        if let Some(gi) = self.global_slot(src) {
            return Some(self.data.global_rows[gi * n + dst]);
        }
        if let Some(gj) = self.global_slot(dst) {
            return Some(self.data.global_cols[src * g + gj]);
        }
        let w = self.window();
        (src.abs_diff(dst) <= w).then(|| self.data.band[src * (2 * w + 1) + dst + w - src])
    }

    /// Weight of a band entry, ignoring the global routing. `None` outside
    /// the window.
    pub fn local_weight(&self, src: usize, dst: usize) -> Option<f32> {
        let w = self.window();
        (src.abs_diff(dst) <= w).then(|| self.data.band[src * (2 * w + 1) + dst + w - src])
    }

    /// Raw band row of `src` including out-of-bounds slots.
    pub fn band_row(&self, src: usize) -> &'a [f32] {
        let width = 2 * self.window() + 1;
        &self.data.band[src * width..(src + 1) * width]
    }
}

impl HeadAttention {
    pub(crate) fn band(&self) -> &[f32] {
        &self.band
    }

    pub(crate) fn global_rows(&self) -> &[f32] {
        &self.global_rows
    }

    pub(crate) fn global_cols(&self) -> &[f32] {
        &self.global_cols
    }
}

struct ByteCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteCursor<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Truncated(format!("while reading {what}")));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f32s(&mut self, count: usize, what: &str) -> Result<Vec<f32>> {
        Ok(self
            .take(count * 4, what)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(n_paras: &[usize]) -> Document {
        let paras: Vec<Vec<String>> = n_paras
            .iter()
            .map(|&k| (0..k).map(|i| format!("t{i}")).collect())
            .collect();
        Document::from_paragraphs("d", &paras).unwrap()
    }

    #[test]
    fn header_only_dump() {
        let dump = AttentionDump::zeros(0, 0, 0, 1, vec![]).unwrap();
        let bytes = dump.to_bytes();
        assert_eq!(bytes.len(), 4 + 2 + 2 + 2 + 4 + 4 + 4);
        let back = AttentionDump::from_bytes(&bytes).unwrap();
        assert_eq!(back.layer_heads().count(), 0);
    }

    #[test]
    fn dimension_mismatch() {
        let d = doc(&[11]);
        assert_eq!(d.n_tokens(), 12);
        let dump = AttentionDump::zeros(1, 1, 10, 1, vec![0]).unwrap();
        let err = AttentionDump::read_for(&dump.to_bytes()[..], &d).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(_)));
    }

    #[test]
    fn bad_magic_version_truncation() {
        let dump = AttentionDump::zeros(1, 1, 4, 1, vec![0]).unwrap();
        let mut bytes = dump.to_bytes();
        assert!(matches!(
            AttentionDump::from_bytes(&bytes[..bytes.len() - 1]),
            Err(Error::Truncated(_))
        ));
        assert!(matches!(
            AttentionDump::from_bytes(&bytes[..3]),
            Err(Error::Truncated(_))
        ));
        bytes[4] = 9;
        assert!(matches!(
            AttentionDump::from_bytes(&bytes),
            Err(Error::UnsupportedVersion(9))
        ));
        bytes[0] = b'X';
        assert!(matches!(
            AttentionDump::from_bytes(&bytes),
            Err(Error::BadMagic(_))
        ));
    }

    #[test]
    fn routing_and_band_edges() {
        let d = doc(&[5]);
        let mut dump = AttentionDump::zeros_for(&d, 1, 1, 1).unwrap();
        dump.set_weight(0, 0, 3, 3, 0.5).unwrap();
        assert_eq!(dump.attention_weight(0, 0, 3, 3).unwrap(), Some(0.5));
        // outside the band, neither endpoint global
        assert_eq!(dump.attention_weight(0, 0, 2, 4).unwrap(), None);
        assert!(dump.set_weight(0, 0, 2, 4, 0.1).is_err());
        // global source / destination always present
        assert_eq!(dump.attention_weight(0, 0, 0, 5).unwrap(), Some(0.0));
        assert_eq!(dump.attention_weight(0, 0, 5, 0).unwrap(), Some(0.0));
        assert!(dump.attention_weight(0, 0, 6, 0).is_err());
        assert!(dump.attention_weight(1, 0, 0, 0).is_err());
    }

    #[test]
    fn sparse_edges() {
        let d = doc(&[3, 3]);
        let text = "# fixture\n0, 0, 1, 2, 0.25\n0 1 4 0 0.5\n";
        let dump = AttentionDump::from_sparse_edges(text.as_bytes(), &d, 1).unwrap();
        assert_eq!((dump.n_layers(), dump.n_heads()), (1, 2));
        assert_eq!(dump.attention_weight(0, 0, 1, 2).unwrap(), Some(0.25));
        assert_eq!(dump.attention_weight(0, 1, 4, 0).unwrap(), Some(0.5));
        assert!(AttentionDump::from_sparse_edges("0 0 1 7 0.5".as_bytes(), &d, 1).is_err());
        assert!(AttentionDump::from_sparse_edges("0 0 1".as_bytes(), &d, 1).is_err());
    }
}
