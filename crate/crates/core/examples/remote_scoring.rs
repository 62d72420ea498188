//! Start the mock scorer behind the HTTP wire protocol, score through the
//! remote client and check the answers match in-process scoring.
//!
//! Set `CTXPROBE_ENDPOINT` to score against an already running server
//! (for example one started with `ctxprobe serve-mock`).

use std::sync::Arc;

use ctxprobe::featurize::Mode;
use ctxprobe::scorer::remote::{DEFAULT_MAX_IN_FLIGHT, ENDPOINT_ENV};
use ctxprobe::scorer::{server, MockScorer, RemoteScorer, ScoreRequest, Scorer, Vocabulary};

fn main() -> ctxprobe::Result<()> {
    let local = Arc::new(MockScorer::copy());
    let (_handle, remote) = match std::env::var(ENDPOINT_ENV) {
        Ok(ep) => (None, RemoteScorer::new(&ep, DEFAULT_MAX_IN_FLIGHT)?),
        Err(_) => {
            let h = server::spawn(local.clone(), "127.0.0.1:0".parse().expect("literal address"))?;
            let r = RemoteScorer::new(&h.endpoint(), DEFAULT_MAX_IN_FLIGHT)?;
            (Some(h), r)
        }
    };
    let health = remote.health()?;
    println!("{} is {} (model {})", remote.endpoint(), health.status, health.model);

    let vocab = Arc::new(Vocabulary::new(
        ["physics", "chemistry", "biology", "geology"].iter().map(|s| s.to_string()),
    )?);
    let contexts = [
        None,
        Some("Alma Adler works in the field of geology."),
        Some("Bruno Brandt works in the field of chemistry."),
    ];
    for (i, ctx) in contexts.iter().enumerate() {
        let req = ScoreRequest {
            id: format!("req-{i}"),
            query: "Alma Adler works in the field of [MASK] .".into(),
            context: ctx.map(str::to_string),
            mode: Mode::TwoSegment,
            candidates: vocab.clone(),
            top_k: 2,
        };
        let over_wire = remote.score(&req)?;
        let in_process = local.score(&req)?;
        println!(
            "{}: argmax {:<10} nsp {:?}  identical to in-process: {}",
            req.id,
            over_wire.argmax_token,
            over_wire.nsp_prob,
            over_wire == in_process
        );
    }
    Ok(())
}
