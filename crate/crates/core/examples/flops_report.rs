//! Closed-form parameter and FLOP calculators for the supported
//! architectures, evaluated on the full-scale reference geometries.
//!
//! All numbers come from formulas, not instrumentation, so this runs in
//! microseconds regardless of model size.

use rachcast::analysis::{cost_report, param_count, ArchDescriptor};
use rachcast::nn::RecurrentKind;
use rachcast::predict::StreamingConfig;

fn main() -> rachcast::Result<()> {
    let streaming = StreamingConfig {
        l_hist: 6000,
        l_f: 100,
        l_p: 200,
        ..StreamingConfig::default()
    };
    let l_buff = 200;

    // Full-scale recurrent geometries: two 2500-wide layers feeding a dense
    // head whose second layer concatenates the recurrent output back in.
    for kind in [RecurrentKind::Lstm, RecurrentKind::Gru] {
        let arch = ArchDescriptor::Recurrent {
            kind,
            input: 2,
            hidden: vec![2500, 2500],
            dense: vec![(2500, 2500), (5000, 2)],
        };
        let report = cost_report(&arch, &streaming, l_buff)?;
        println!("{kind:?} 2x2500 + dense head");
        println!("  params          : {:>14}", report.params);
        println!("  flops / eval    : {:>14.0}", report.flops_per_eval);
        println!("  flops / slot (rolling, l_buff={l_buff}): {:.3e}", report.flops_rolling);
        if let (Some(f), Some(r)) = (report.flops_flsp, report.ratio) {
            println!("  flops / slot (stateful)             : {f:.3e}  ({:.0}% of rolling)", r * 100.0);
        }
    }

    // CNN-1D baseline: window of 256 slots, three conv stages, two FC layers.
    let cnn = ArchDescriptor::Cnn1d {
        window: 256,
        channels: vec![2, 32, 64, 64],
        kernels: vec![5, 5, 3],
        fc: vec![(2048, 256), (256, 2)],
    };
    println!("CNN-1D baseline (window 256)");
    println!("  params          : {:>14}", param_count(&cnn)?);
    let report = cost_report(&cnn, &streaming, l_buff)?;
    println!("  flops / eval    : {:>14.0}", report.flops_per_eval);
    println!("  flops / slot (rolling, amortized over l_f): {:.3e}", report.flops_rolling);
    Ok(())
}
