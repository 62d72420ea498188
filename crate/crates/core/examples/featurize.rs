//! Show how a (query, context) pair is laid out in each input mode, and how
//! an overlong context is cut to fit the 512-token budget.

use ctxprobe::featurize::{featurize, Mode, MAX_LEN};

fn main() -> ctxprobe::Result<()> {
    let query = "Dante was born in [MASK] .";
    let context = "Dante Alighieri was born in Florence in 1265.";
    for mode in [Mode::TwoSegment, Mode::OneSegment, Mode::SeparatorOnly] {
        let input = featurize(query, Some(context), mode)?;
        println!("{}:", mode.name());
        println!("  tokens   {}", input.tokens.join(" "));
        let segs: Vec<String> = input.segment_ids.iter().map(u8::to_string).collect();
        println!("  segments {}", segs.join(""));
        println!("  mask at  {}", input.mask_index);
    }

    let long = "filler ".repeat(2 * MAX_LEN);
    let cut = featurize(query, Some(&long), Mode::TwoSegment)?;
    println!("\nlong context: {} tokens kept of {}", cut.tokens.len(), 2 * MAX_LEN);

    let huge_query = format!("{} [MASK]", "word ".repeat(MAX_LEN));
    match featurize(&huge_query, None, Mode::TwoSegment) {
        Err(e) => println!("overlong query rejected: {e}"),
        Ok(_) => println!("overlong query unexpectedly accepted"),
    }
    Ok(())
}
