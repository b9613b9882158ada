//! CSV files for word-intrusion and sense-selection crowd tasks.

use std::io::Write;

use senseforge_core::eval::{IntrusionTask, SenseSelectionTask};

use crate::error::Result;

/// `task_id,word,sense,option_1..option_4,intruder_index,intruder_sense`
pub fn write_intrusion_csv<W: Write>(out: W, tasks: &[IntrusionTask]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let width = tasks.iter().map(|t| t.shown_words.len()).max().unwrap_or(4);
    let mut header = vec!["task_id".to_string(), "word".into(), "sense".into()];
    header.extend((1..=width).map(|i| format!("option_{i}")));
    header.extend(["intruder_index".to_string(), "intruder_sense".into()]);
    w.write_record(&header)?;
    for (i, t) in tasks.iter().enumerate() {
        let mut row = vec![i.to_string(), t.word.clone(), t.sense.to_string()];
        row.extend(t.shown_words.iter().cloned());
        row.extend(std::iter::repeat_n(String::new(), width - t.shown_words.len()));
        row.extend([t.intruder_index.to_string(), t.intruder_sense.to_string()]);
        w.write_record(&row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// `task_id,word,sentence,option_1..K,option_sense_1..K,model_choice,posterior_1..K`.
/// Option cells hold space-joined neighbor groups; dummy groups have sense `-`.
pub fn write_selection_csv<W: Write>(out: W, tasks: &[SenseSelectionTask]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let k = tasks.iter().map(|t| t.groups.len()).max().unwrap_or(0);
    let mut header = vec!["task_id".to_string(), "word".into(), "sentence".into()];
    header.extend((1..=k).map(|i| format!("option_{i}")));
    header.extend((1..=k).map(|i| format!("option_sense_{i}")));
    header.push("model_choice".into());
    header.extend((1..=k).map(|i| format!("posterior_{i}")));
    w.write_record(&header)?;
    for (i, t) in tasks.iter().enumerate() {
        let pad = k - t.groups.len();
        let mut sentence = t.sentence.clone();
        sentence[t.target] = format!("<b>{}</b>", sentence[t.target]);
        let mut row = vec![i.to_string(), t.word.clone(), sentence.join(" ")];
        row.extend(t.groups.iter().map(|g| g.join(" ")));
        row.extend(std::iter::repeat_n(String::new(), pad));
        row.extend(t.group_senses.iter().map(|s| s.map_or("-".to_string(), |s| s.to_string())));
        row.extend(std::iter::repeat_n(String::new(), pad));
        row.push(t.model_choice.to_string());
        row.extend(t.posterior.iter().map(|p| format!("{p:.6}")));
        row.extend(std::iter::repeat_n(String::new(), pad));
        w.write_record(&row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
