//! Cycle-stepped trace of small tiles next to the closed-form counts.
use nmsat::model::StageDims;
use nmsat::nm::{pack_nm_with, DenseMatrix, GroupAxis, NmConfig, TailPolicy};
use nmsat::sim::trace::{trace_os, trace_os_interleaved, trace_ws};
use nmsat::sim::{stce_os_cycles, stce_ws_cycles, ArrayConfig};

fn filled(rows: usize, cols: usize) -> DenseMatrix {
    let data = (0..rows * cols).map(|k| (k % 7) as f32 - 3.0).collect();
    DenseMatrix::new(rows, cols, data).unwrap()
}

fn main() -> nmsat::Result<()> {
    let nm = NmConfig::new(2, 4)?;
    let array = ArrayConfig {
        rows: 2,
        cols: 2,
        n: 2,
        m: 4,
        ..Default::default()
    };
    let dims = StageDims {
        rows: 4,
        reduction: 8,
        cols: 2,
    };
    let w = pack_nm_with(&filled(8, 2), nm, GroupAxis::Rows, TailPolicy::ZeroPad)?;
    let ws = trace_ws(&filled(4, 8), &w, &array)?;
    println!(
        "WS 2:4 on 2x2: trace {} formula {}",
        ws.cycles,
        stce_ws_cycles(dims, Some(nm), &array)?
    );

    for interleave in [false, true] {
        let a = ArrayConfig {
            interleave,
            ..array
        };
        let os = trace_os(&filled(4, 8), &filled(8, 2), &a)?;
        println!(
            "OS interleave={interleave}: trace {} formula {}",
            os.cycles,
            stce_os_cycles(dims, &a)
        );
    }
    let a = ArrayConfig::default();
    println!(
        "three interleaved 32x32 tiles of 64 slots: {} cycles",
        trace_os_interleaved(&a, 64, 3)
    );
    Ok(())
}
