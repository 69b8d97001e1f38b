// Scores a prediction file the way the training harness writes it
// (`clip_id,label,score`) and shows the class-weighted loss.
//
// ```text
// cargo run --example metrics_report
// ```

use std::error::Error;

use headforge::metrics::{evaluate, inverse_frequency_weights, read_predictions, weighted_bce};

const PREDICTIONS: &str = "\
clip_id,label,score
p17_c0,1,0.91
p17_c1,1,0.62
p18_c0,0,0.55
p18_c1,0,0.12
p19_c0,0,0.33
p19_c1,0,0.08
p20_c0,1,0.47
p20_c1,0,0.62
";

pub fn run() -> Result<(), Box<dyn Error>> {
    let records = read_predictions(PREDICTIONS.as_bytes())?;
    let report = evaluate(&records, 0.5)?;
    println!("{}", serde_json::to_string_pretty(&report)?);

    let (wp, wn) = inverse_frequency_weights(records.iter().map(|r| r.label))?;
    println!("class weights: positive {wp:.3}, negative {wn:.3}");
    println!("bce {:.4}, weighted {:.4}", weighted_bce(&records, 1.0, 1.0)?, weighted_bce(&records, wp, wn)?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run()
}
