//! Central finite differences against the reverse-mode gradients of the full
//! encoder/attention/decoder loss on a two-sentence batch.
//!
//! Run with `cargo run --example gradient_check`.

use std::error::Error;

use ffr::model::{batch_loss, Feeding, ModelError};
use ffr::numerics::{check_gradients, NumericsError};
use ffr::tokenizer::{EOS, SOS};
use ffr::{EncodedSentence, ModelConfig, ModelParameters};

fn sentence(ids: &[usize]) -> EncodedSentence {
    let mut v = vec![SOS];
    v.extend_from_slice(ids);
    v.push(EOS);
    EncodedSentence::new(v, 10).expect("ids below 10")
}

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let config = ModelConfig::new(10, 10).with_dims(8, 6, 4);
    let mut model = ModelParameters::init(config, 42)?;
    let batch = [
        (sentence(&[4, 5, 6]), sentence(&[7, 8])),
        (sentence(&[9, 4]), sentence(&[5, 6, 7, 4])),
    ];
    let refs: Vec<_> = batch.iter().map(|(s, t)| (s, t)).collect();

    let report = check_gradients(
        |tape, params| {
            let m = ModelParameters::from_param_set(config, params.clone()).map_err(as_numerics)?;
            batch_loss(tape, &m, &refs, Feeding::Teacher).map_err(as_numerics)
        },
        model.params_mut(),
        1e-5,
        usize::MAX,
        0,
    )?;
    println!("entries checked     {}", report.entries_checked);
    println!("max relative error  {:.3e}", report.max_rel_error);
    println!("max absolute error  {:.3e} (entries below 1e-6)", report.max_abs_error);
    if let Some((name, index, analytic, numeric)) = &report.worst {
        println!("worst entry         {name}[{index}]: {analytic:.8e} vs {numeric:.8e}");
    }
    assert!(report.max_rel_error < 1e-4);
    Ok(())
}

fn as_numerics(e: ModelError) -> NumericsError {
    match e {
        ModelError::Numerics(n) => n,
        other => panic!("{other}"),
    }
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
