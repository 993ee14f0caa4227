//! Byte-level pins for the bundled law-firm fixture. The three files are
//! what `rolescan gen --preset mockup` writes; regenerate them with that
//! command whenever the blueprint changes, and let these tests flag any
//! drift between the files and the builder.

use rolescan::generator::{mockup, serialize_planted, PlantedFlaw};
use rolescan::ingest::{parse_factory, parse_policy, serialize_factory, serialize_policy};
use rolescan::validate_factory;

const FACTORY: &str = include_str!("../fixtures/lawfirm/factory.json");
const POLICY: &str = include_str!("../fixtures/lawfirm/policy.json");
const PLANTED: &str = include_str!("../fixtures/lawfirm/planted.json");

#[test]
fn fixture_files_match_the_blueprint() {
    let gen = mockup();
    assert_eq!(serialize_factory(&gen.factory), FACTORY);
    assert_eq!(serialize_policy(&gen.policy), POLICY);
    assert_eq!(serialize_planted(&gen.planted), PLANTED);
}

#[test]
fn fixture_factory_parses_and_round_trips() {
    let factory = parse_factory(FACTORY).expect("fixture factory parses");
    assert_eq!(validate_factory(&factory), vec![]);
    assert_eq!(serialize_factory(&factory), FACTORY);

    let policy = parse_policy(POLICY, &factory).expect("fixture policy parses");
    assert_eq!(serialize_policy(&policy), POLICY);
}

#[test]
fn fixture_manifest_lists_eight_planted_flaws() {
    let planted: Vec<PlantedFlaw> =
        serde_json::from_str(PLANTED).expect("fixture manifest parses");
    assert_eq!(planted.len(), 8);
    let mut sorted = planted.clone();
    sorted.sort();
    assert_eq!(planted, sorted);
}
