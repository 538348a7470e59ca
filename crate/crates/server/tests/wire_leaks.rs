use std::sync::Arc;

use pws_server::{serve_service, Client};
use pws_testkit::fuzz::FuzzOptions;
use pws_testkit::leaks::find_leak;
use pws_testkit::wire::wire_case;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn no_formula_text_reaches_restricted_sessions_in_process() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut payloads = 0;
    for case in 0..500 {
        let c = wire_case(&mut rng, &FuzzOptions::default());
        for script in &c.scripts {
            for body in script {
                let reply = c.service.handle(body);
                let text = String::from_utf8(reply).unwrap();
                assert_eq!(find_leak(&text, &c.sources), None, "case {case}: {text}");
                payloads += 1;
            }
        }
    }
    assert!(payloads >= 500 * 2 * 10);
}

#[test]
fn no_formula_text_reaches_restricted_sessions_over_tcp() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for case in 0..40 {
        let c = wire_case(&mut rng, &FuzzOptions::default());
        let server = serve_service(Arc::new(c.service), "127.0.0.1:0").unwrap();
        for script in &c.scripts {
            let mut client = Client::connect(server.local_addr()).unwrap();
            for body in script {
                let text = String::from_utf8(client.send_raw(body).unwrap()).unwrap();
                assert_eq!(find_leak(&text, &c.sources), None, "case {case}: {text}");
            }
        }
    }
}

#[test]
fn the_search_does_see_owner_traffic() {
    // Negative control: the owner's export carries the formulas.
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let c = loop {
        let c = wire_case(&mut rng, &FuzzOptions::default());
        if !c.sources.is_empty() {
            break c;
        }
    };
    let token = c.service.issue_session(pws_testkit::fuzz::OWNER, pws_testkit::wire::WORKBOOK).unwrap();
    let reply = c.service.handle(format!(r#"{{"kind":"export","token":"{token}"}}"#).as_bytes());
    assert!(find_leak(&String::from_utf8(reply).unwrap(), &c.sources).is_some());
}
