//! Integration of ingestion, propensity estimation, and matching on a
//! corpus with a planted one-gender post marker: posts whose content gives
//! the gender away must lose all of their comments during matching.

mod common;

use std::collections::BTreeSet;

use biaslens::corpus::{ingest_reader, Gender, RawRow};
use biaslens::propensity::{
    greedy_match, matched_set_from_corpus, score_posts, train_propensity_model, Caliper,
    MatchConfig, PropensityHyper, PropensityScore,
};

const MARKER: &str = "lookok";

// Mirrors the motivating scenario: some posts ("do I look ok?") are written
// only by F authors, every other post is drawn from templates both genders
// use. The marked posts become perfectly identifiable, fall outside the
// caliper, and their comments must vanish from the matched training set.
fn fixture_rows() -> Vec<RawRow> {
    let templates = [
        "i love tennis so much",
        "tennis is great fun",
        "what a week in politics",
        "the weather is lovely today",
        "my new book arrives soon",
        "thoughts on the big game",
        "cooking pasta again tonight",
        "travel photos from the coast",
    ];
    let mut rows = Vec::new();
    let mut comment_no = 0;
    let mut push_post = |rows: &mut Vec<RawRow>,
                         comment_no: &mut usize,
                         author: &str,
                         gender: &str,
                         post_id: String,
                         text: &str| {
        for k in 0..3 {
            *comment_no += 1;
            rows.push(RawRow {
                author_id: author.to_string(),
                gender: gender.to_string(),
                author_name: format!("First{author} Last{author}"),
                post_id: post_id.clone(),
                post_text: text.to_string(),
                comment_text: format!("you are really nice friend {k} number {comment_no}"),
            });
        }
    };
    for i in 0..6 {
        for (prefix, gender) in [("f", "F"), ("m", "M")] {
            let author = format!("{prefix}{i}");
            for j in 0..4 {
                let text = templates[(i + j) % templates.len()];
                push_post(
                    &mut rows,
                    &mut comment_no,
                    &author,
                    gender,
                    format!("p{author}n{j}"),
                    text,
                );
            }
            if gender == "F" {
                for j in 0..2 {
                    let text = format!("do i look ok {MARKER}");
                    push_post(
                        &mut rows,
                        &mut comment_no,
                        &author,
                        gender,
                        format!("p{author}marked{j}"),
                        &text,
                    );
                }
            }
        }
    }
    rows
}

#[test]
fn marked_posts_lose_their_comments_in_matching() {
    let tsv: String = fixture_rows()
        .iter()
        .map(|r| r.to_line('\t') + "\n")
        .collect();
    let (corpus, report) = ingest_reader(tsv.as_bytes(), '\t').unwrap();
    assert_eq!(report.rows_rejected, 0);

    let posts: Vec<(Vec<String>, Gender)> = corpus
        .posts
        .iter()
        .map(|p| (p.tokens.clone(), corpus.author_of_post(p).gender))
        .collect();
    let hyper = PropensityHyper {
        embed_dim: 16,
        hidden_dim: 16,
        ff_dim: 12,
        epochs: 20,
        learning_rate: 3e-3,
        seed: 7,
        ..Default::default()
    };
    let model = train_propensity_model(&posts, &[], hyper).unwrap();
    let scores = score_posts(&model, &corpus.posts).unwrap();
    let score_of: std::collections::HashMap<&str, f64> = scores
        .iter()
        .map(|s| (s.post_id.as_str(), s.e))
        .collect();

    let is_marked =
        |p: &biaslens::corpus::Post| p.tokens.iter().any(|t| t == MARKER);
    let marked: Vec<f64> = corpus
        .posts
        .iter()
        .filter(|p| is_marked(p))
        .map(|p| score_of[p.post_id.as_str()])
        .collect();
    let neutral: Vec<f64> = corpus
        .posts
        .iter()
        .filter(|p| !is_marked(p))
        .map(|p| score_of[p.post_id.as_str()])
        .collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(
        mean(&marked) > 0.8,
        "marked posts should read as strongly F, got {}",
        mean(&marked)
    );
    // Template posts are used identically by both genders; their scores
    // must stay ambiguous.
    assert!(
        (mean(&neutral) - 0.5).abs() < 0.15,
        "neutral templates drifted to {}",
        mean(&neutral)
    );

    let pool = |g: Gender| -> Vec<PropensityScore> {
        corpus
            .posts
            .iter()
            .filter(|p| corpus.author_of_post(p).gender == g)
            .map(|p| PropensityScore {
                post_id: p.post_id.clone(),
                e: score_of[p.post_id.as_str()],
            })
            .collect()
    };
    let outcome = greedy_match(
        &pool(Gender::F),
        &pool(Gender::M),
        &MatchConfig {
            caliper: Caliper::Fixed(0.1),
            seed: 3,
        },
    )
    .unwrap();
    assert!(!outcome.pairs.is_empty(), "neutral template posts must match");

    // No marked post appears in any pair.
    for pair in &outcome.pairs {
        assert!(
            !is_marked(corpus.post(&pair.post_f).unwrap()),
            "marked post {} was matched",
            pair.post_f
        );
    }

    // Every comment under a marked post is gone from the balanced set.
    let matched = matched_set_from_corpus(&corpus, &outcome.pairs, 5);
    assert!(!matched.comment_ids.is_empty());
    let matched_ids: BTreeSet<&str> = matched.comment_ids.iter().map(|s| s.as_str()).collect();
    let mut discarded = 0;
    for comment in &corpus.comments {
        if is_marked(corpus.post(&comment.post_id).unwrap()) {
            discarded += 1;
            assert!(
                !matched_ids.contains(comment.comment_id.as_str()),
                "comment {} under marked post {} survived matching",
                comment.comment_id,
                comment.post_id
            );
        }
    }
    assert_eq!(discarded, 6 * 2 * 3, "every marked post has 3 comments");
}
