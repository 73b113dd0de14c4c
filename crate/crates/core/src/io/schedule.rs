//! Binary schedule files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "LDPCSCHD" | version u32 | graph digest [32] | mode u8
//! n_bits u64 | n_work_bits u64 | n_slots u64 | xor_budget u64
//! info_positions list | clone_origin list | step count u64 | steps
//! ```
//!
//! A list is a u64 length followed by u64 items. Each step is a tag byte
//! followed by its fields in declaration order.

use std::io::{Read, Write};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use crate::decompose::split_high_degree;
use crate::encoder::{Mode, Operand, PairCase, Schedule, Step};
use crate::error::{Error, Result};
use crate::tanner::TannerGraph;

pub const MAGIC: &[u8; 8] = b"LDPCSCHD";
pub const FORMAT_VERSION: u32 = 1;

struct Writer<W: Write>(W);

impl<W: Write> Writer<W> {
    fn u8(&mut self, v: u8) -> Result<()> {
        Ok(self.0.write_u8(v)?)
    }

    fn n(&mut self, v: usize) -> Result<()> {
        Ok(self.0.write_u64::<LE>(v as u64)?)
    }

    fn list(&mut self, v: &[usize]) -> Result<()> {
        self.n(v.len())?;
        v.iter().try_for_each(|&x| self.n(x))
    }

    fn operands(&mut self, v: &[Operand]) -> Result<()> {
        self.n(v.len())?;
        for op in v {
            match *op {
                Operand::Bit(b) => {
                    self.u8(0)?;
                    self.n(b)?;
                }
                Operand::Slot(s) => {
                    self.u8(1)?;
                    self.n(s)?;
                }
            }
        }
        Ok(())
    }

    fn step(&mut self, step: &Step) -> Result<()> {
        match step {
            Step::Zero { bits } => {
                self.u8(0)?;
                self.list(bits)
            }
            Step::ComputeParity { target, sources } => {
                self.u8(1)?;
                self.n(*target)?;
                self.operands(sources)
            }
            Step::EvalRhs { slot, sources } => {
                self.u8(2)?;
                self.n(*slot)?;
                self.operands(sources)
            }
            Step::CombineSlots { slot, sources } => {
                self.u8(3)?;
                self.n(*slot)?;
                self.list(sources)
            }
            Step::EvalKeyCheck { slot, sources } => {
                self.u8(4)?;
                self.n(*slot)?;
                self.operands(sources)
            }
            Step::CorrectSingle { key, target } => {
                self.u8(5)?;
                self.n(*key)?;
                self.n(*target)
            }
            Step::CorrectPair { case, keys, targets } => {
                self.u8(6)?;
                self.u8(match case {
                    PairCase::GammaInBoth => 0,
                    PairCase::DeltaInBoth => 1,
                    PairCase::Disjoint => 2,
                })?;
                self.list(keys)?;
                self.list(targets)
            }
            Step::CorrectGeneral { keys, targets, inverse } => {
                self.u8(7)?;
                self.list(keys)?;
                self.list(targets)?;
                self.n(inverse.len())?;
                inverse.iter().try_for_each(|r| self.list(r))
            }
            Step::Recompute { guard, target, sources } => {
                self.u8(8)?;
                self.list(guard)?;
                self.n(*target)?;
                self.operands(sources)
            }
            Step::FlipList { condition, bits } => {
                self.u8(9)?;
                self.list(condition)?;
                self.list(bits)
            }
        }
    }
}

/// Reads from a byte slice, refusing any length the rest of the input
/// could not hold.
struct Reader<'a> {
    rest: &'a [u8],
}

impl Reader<'_> {
    fn truncated(e: std::io::Error) -> Error {
        Error::corrupt(format!("schedule file is truncated ({e})"))
    }

    fn u8(&mut self) -> Result<u8> {
        self.rest.read_u8().map_err(Self::truncated)
    }

    fn n(&mut self) -> Result<usize> {
        let v = self.rest.read_u64::<LE>().map_err(Self::truncated)?;
        usize::try_from(v).map_err(|_| Error::corrupt(format!("value {v} does not fit in memory")))
    }

    fn len(&mut self, item_bytes: usize) -> Result<usize> {
        let k = self.n()?;
        if k.saturating_mul(item_bytes) > self.rest.len() {
            return Err(Error::corrupt(format!("list of {k} items runs past the end of the file")));
        }
        Ok(k)
    }

    fn list(&mut self) -> Result<Vec<usize>> {
        let k = self.len(8)?;
        (0..k).map(|_| self.n()).collect()
    }

    fn pair(&mut self) -> Result<[usize; 2]> {
        let v = self.list()?;
        <[usize; 2]>::try_from(v).map_err(|v| Error::corrupt(format!("expected two entries, found {}", v.len())))
    }

    fn operands(&mut self) -> Result<Vec<Operand>> {
        let k = self.len(9)?;
        (0..k)
            .map(|_| match self.u8()? {
                0 => Ok(Operand::Bit(self.n()?)),
                1 => Ok(Operand::Slot(self.n()?)),
                t => Err(Error::corrupt(format!("unknown operand tag {t}"))),
            })
            .collect()
    }

    fn step(&mut self) -> Result<Step> {
        Ok(match self.u8()? {
            0 => Step::Zero { bits: self.list()? },
            1 => Step::ComputeParity { target: self.n()?, sources: self.operands()? },
            2 => Step::EvalRhs { slot: self.n()?, sources: self.operands()? },
            3 => Step::CombineSlots { slot: self.n()?, sources: self.list()? },
            4 => Step::EvalKeyCheck { slot: self.n()?, sources: self.operands()? },
            5 => Step::CorrectSingle { key: self.n()?, target: self.n()? },
            6 => {
                let case = match self.u8()? {
                    0 => PairCase::GammaInBoth,
                    1 => PairCase::DeltaInBoth,
                    2 => PairCase::Disjoint,
                    t => return Err(Error::corrupt(format!("unknown pair case {t}"))),
                };
                Step::CorrectPair { case, keys: self.pair()?, targets: self.pair()? }
            }
            7 => {
                let keys = self.list()?;
                let targets = self.list()?;
                let k = self.len(8)?;
                let inverse = (0..k).map(|_| self.list()).collect::<Result<_>>()?;
                Step::CorrectGeneral { keys, targets, inverse }
            }
            8 => Step::Recompute { guard: self.list()?, target: self.n()?, sources: self.operands()? },
            9 => Step::FlipList { condition: self.list()?, bits: self.list()? },
            t => return Err(Error::corrupt(format!("unknown step tag {t}"))),
        })
    }
}

pub fn schedule_to_bytes(s: &Schedule) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    write_all(&mut w, s).expect("writing to memory cannot fail");
    w.0
}

fn write_all<W: Write>(w: &mut Writer<W>, s: &Schedule) -> Result<()> {
    w.0.write_all(MAGIC)?;
    w.0.write_u32::<LE>(FORMAT_VERSION)?;
    w.0.write_all(&s.graph_digest)?;
    w.u8(match s.mode {
        Mode::Recompute => 0,
        Mode::Flip => 1,
    })?;
    w.n(s.n_bits)?;
    w.n(s.n_work_bits)?;
    w.n(s.n_slots)?;
    w.0.write_u64::<LE>(s.xor_budget)?;
    w.list(&s.info_positions)?;
    w.list(&s.clone_origin)?;
    w.n(s.steps.len())?;
    s.steps.iter().try_for_each(|st| w.step(st))
}

/// Decodes a schedule and checks that it is runnable. With `matrix`, also
/// checks that the schedule was compiled for it.
pub fn schedule_from_bytes(bytes: &[u8], matrix: Option<&TannerGraph>) -> Result<Schedule> {
    let mut r = Reader { rest: bytes };
    let mut magic = [0u8; 8];
    r.rest.read_exact(&mut magic).map_err(Reader::truncated)?;
    if &magic != MAGIC {
        return Err(Error::corrupt("not a schedule file"));
    }
    let version = r.rest.read_u32::<LE>().map_err(Reader::truncated)?;
    if version != FORMAT_VERSION {
        return Err(Error::corrupt(format!("schedule format version {version}, expected {FORMAT_VERSION}")));
    }
    let mut graph_digest = [0u8; 32];
    r.rest.read_exact(&mut graph_digest).map_err(Reader::truncated)?;
    let mode = match r.u8()? {
        0 => Mode::Recompute,
        1 => Mode::Flip,
        t => return Err(Error::corrupt(format!("unknown mode {t}"))),
    };
    let n_bits = r.n()?;
    let n_work_bits = r.n()?;
    let n_slots = r.n()?;
    let xor_budget = r.rest.read_u64::<LE>().map_err(Reader::truncated)?;
    let info_positions = r.list()?;
    let clone_origin = r.list()?;
    let n_steps = r.len(1)?;
    let steps = (0..n_steps).map(|_| r.step()).collect::<Result<Vec<_>>>()?;
    if !r.rest.is_empty() {
        return Err(Error::corrupt(format!("{} stray bytes after the last step", r.rest.len())));
    }
    let s = Schedule { n_bits, n_work_bits, n_slots, info_positions, clone_origin, steps, xor_budget, mode, graph_digest };
    s.validate().map_err(|e| Error::corrupt(format!("schedule is not runnable: {e}")))?;
    if let Some(h) = matrix {
        if split_high_degree(h).0.digest() != s.graph_digest {
            return Err(Error::Usage("schedule was compiled for a different matrix".into()));
        }
    }
    Ok(s)
}

pub fn save_schedule(s: &Schedule, out: impl Write) -> Result<()> {
    let mut w = Writer(std::io::BufWriter::new(out));
    write_all(&mut w, s)?;
    w.0.flush()?;
    Ok(())
}

pub fn load_schedule(mut input: impl Read, matrix: Option<&TannerGraph>) -> Result<Schedule> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    schedule_from_bytes(&bytes, matrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codes::random_code;
    use crate::encoder::preprocess;
    use crate::fixtures::code_13_26;
    use crate::gf2::BitWord;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_keeps_every_step() {
        for mode in [Mode::Flip, Mode::Recompute] {
            let g = code_13_26();
            let (_, s) = preprocess(&g, mode).unwrap();
            let bytes = schedule_to_bytes(&s);
            assert_eq!(&bytes[..8], MAGIC);
            let back = schedule_from_bytes(&bytes, Some(&g)).unwrap();
            assert_eq!(back, s);
            assert_eq!(schedule_to_bytes(&back), bytes);
        }
    }

    #[test]
    fn split_schedules_check_against_the_unsplit_matrix() {
        let g = random_code(&mut ChaCha8Rng::seed_from_u64(5), 60, &[3, 5, 7], 6.0);
        assert!(g.max_bit_degree() > 3);
        let (_, s) = preprocess(&g, Mode::Flip).unwrap();
        let back = schedule_from_bytes(&schedule_to_bytes(&s), Some(&g)).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn wrong_matrix_is_rejected() {
        let (_, s) = preprocess(&code_13_26(), Mode::Flip).unwrap();
        let mut rows = code_13_26().rows().to_vec();
        rows[0].pop();
        let other = TannerGraph::from_rows(26, rows).unwrap();
        assert!(matches!(schedule_from_bytes(&schedule_to_bytes(&s), Some(&other)), Err(Error::Usage(_))));
    }

    #[test]
    fn damage_is_reported() {
        let (_, s) = preprocess(&code_13_26(), Mode::Flip).unwrap();
        let bytes = schedule_to_bytes(&s);
        let format_err = |b: &[u8]| matches!(schedule_from_bytes(b, None), Err(Error::Format { .. }));
        assert!(format_err(&bytes[..bytes.len() - 1]));
        assert!(format_err(&[bytes.as_slice(), &[0]].concat()));
        let mut bad_magic = bytes.clone();
        bad_magic[0] ^= 1;
        assert!(format_err(&bad_magic));
        let mut bad_version = bytes.clone();
        bad_version[8] = 9;
        assert!(format_err(&bad_version));
        // A huge list length must not be trusted for allocation.
        let mut huge = bytes.clone();
        let at = 8 + 4 + 32 + 1 + 32;
        huge[at..at + 8].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(format_err(&huge));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn loaded_schedules_encode_identically(seed in any::<u64>(), n in 20usize..120) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = random_code(&mut rng, n, &[2, 3, 4], 5.0);
            let (_, s) = preprocess(&g, Mode::Flip).unwrap();
            let back = schedule_from_bytes(&schedule_to_bytes(&s), Some(&g)).unwrap();
            prop_assert_eq!(&back, &s);
            let info = BitWord::from_bools(&(0..s.n_info()).map(|i| (seed >> (i % 64)) & 1 == 1).collect::<Vec<_>>());
            prop_assert_eq!(back.encode(&info).unwrap(), s.encode(&info).unwrap());
        }
    }
}
