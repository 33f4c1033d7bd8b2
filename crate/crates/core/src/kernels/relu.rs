//! ReLU on packed q7 words.

use crate::packedops::{qsub8, PackedWord};

/// In-place `max(0, x)`, four bytes per step.
///
/// Each byte's sign bit is rotated down to bit 0 of the same byte, and
/// `QSUB8(0, bits)` turns it into a `0xFF` mask for negative lanes. The word
/// is then cleared under the mask.
pub fn relu_swar_q7(data: &mut [i8]) {
    let mut words = data.chunks_exact_mut(4);
    for w in &mut words {
        let v = PackedWord::load_q7x4(w);
        let signs = PackedWord(v.bits() & 0x8080_8080).rotate_right(7);
        let mask = qsub8(PackedWord::ZERO, signs);
        PackedWord(v.bits() & !mask.bits()).store_q7x4(w);
    }
    for v in words.into_remainder() {
        if *v < 0 {
            *v = 0;
        }
    }
}
