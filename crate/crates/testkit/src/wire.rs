//! Scripted wire traffic for limited-user and viewer sessions.

use std::time::Duration;

use pws_core::address::{column_letters, format_sheet_name};
use pws_server::Service;
use rand::Rng;
use serde_json::json;

use crate::fuzz::{random_acl, random_input, random_workbook, FuzzOptions, LIMITED, VIEWER};
use crate::leaks::formula_sources;

pub const WORKBOOK: &str = "fuzz";

pub struct WireCase {
    pub service: Service,
    /// Formula text neither session may ever receive.
    pub sources: Vec<String>,
    /// Request bodies per session, to be sent in order.
    pub scripts: Vec<Vec<Vec<u8>>>,
}

/// A random hosted workbook with one script for a limited user and one for a
/// viewer. The scripts touch every message kind, including ones the
/// sessions are refused.
pub fn wire_case(rng: &mut impl Rng, opts: &FuzzOptions) -> WireCase {
    let wb = random_workbook(rng, opts);
    let acl = random_acl(rng, &wb);
    let sources = formula_sources(&wb);
    let names: Vec<String> = wb.sheets().iter().map(|s| s.name().to_string()).collect();
    let corner = format!("{}{}", column_letters(opts.size), opts.size);
    let mut service = Service::new(Vec::new(), Duration::from_secs(3600));
    service.host(WORKBOOK, wb, acl).expect("fresh id");

    let mut scripts = Vec::new();
    for user in [LIMITED, VIEWER] {
        let token = service.issue_session(user, WORKBOOK).expect("hosted");
        let mut reqs = vec![
            json!({"kind": "get_view", "token": token}),
            json!({"kind": "export", "token": token}),
            json!({"kind": "audit", "token": token}),
            json!({"kind": "publish", "token": token, "force": true}),
            json!({"kind": "grant", "token": token, "user": user, "role": "owner"}),
        ];
        for name in &names {
            let rect = format!("{}!A1:{corner}", format_sheet_name(name));
            reqs.push(json!({"kind": "copy", "token": token, "rect": rect}));
        }
        for _ in 0..3 {
            let sheet = format_sheet_name(&names[rng.random_range(0..names.len())]);
            let addr = format!(
                "{sheet}!{}{}",
                column_letters(rng.random_range(1..=opts.size)),
                rng.random_range(1..=opts.size)
            );
            let input = random_input(rng, &names, opts.size, opts.allow_external);
            reqs.push(json!({"kind": "edit", "token": token, "addr": addr, "input": input}));
        }
        reqs.push(json!({"kind": "get_view", "token": token, "since": 0}));
        reqs.push(json!({"kind": "export", "token": token}));
        scripts.push(reqs.iter().map(|r| serde_json::to_vec(r).expect("json")).collect());
    }
    WireCase {
        service,
        sources,
        scripts,
    }
}
