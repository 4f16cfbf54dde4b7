mod common;

use lob_core::engine::{Action, ResidualMode};
use lob_core::types::{OrderId, Price, Time};
use lob_sim::scenario::{Overrides, Scenario, ScenarioError, AGENT_ID_STRIDE};

fn parse(text: &str) -> Result<Scenario, ScenarioError> {
    Scenario::parse(text, &Overrides::default())
}

fn order(id: u64, ts: &str, extra: &str) -> String {
    format!(
        "[[orders]]\n\"Device ID\" = 1\n\"Order ID\" = {id}\n\"Timestamp\" = {ts}\n\"Quantity\" = 1\n\"isPowerFlexible\" = true\n\"Duration\" = 5\n{extra}\n"
    )
}

#[test]
fn table1_loads_as_one_batch() {
    let s = Scenario::load(&common::scenario("table1.toml"), &Overrides::default()).unwrap();
    assert_eq!(s.inputs.len(), 1);
    assert_eq!(s.inputs[0].time, Time(727));
    let Action::Batch(reqs) = &s.inputs[0].action else {
        panic!("expected a batch")
    };
    let prices: Vec<_> = reqs.iter().map(|r| r.price.unwrap().0).collect();
    assert_eq!(prices, [400, 300, 250, 100]);
    let stamps: Vec<_> = reqs.iter().map(|r| r.timestamp.unwrap().0).collect();
    assert_eq!(stamps, [0, 385, 498, 727]);
}

#[test]
fn version_is_required_and_checked() {
    assert!(matches!(parse(""), Err(ScenarioError::Toml(_))));
    assert!(matches!(
        parse("version = 2"),
        Err(ScenarioError::Version(2))
    ));
}

#[test]
fn prices_accept_strings_and_numbers_on_the_grid() {
    let s = parse(&format!(
        "version = 1\n{}{}{}",
        order(1, "0", "\"Price\" = \"2.50\""),
        order(2, "1", "\"Price\" = 2.5"),
        order(3, "2", "\"Price\" = 3")
    ))
    .unwrap();
    let prices: Vec<_> = s
        .inputs
        .iter()
        .map(|i| match &i.action {
            Action::Submit(r) => r.price,
            _ => None,
        })
        .collect();
    assert_eq!(
        prices,
        [Some(Price(250)), Some(Price(250)), Some(Price(300))]
    );
    let err = parse(&format!(
        "version = 1\n{}",
        order(1, "0", "\"Price\" = \"2.505\"")
    ))
    .unwrap_err();
    assert!(
        err.to_string().contains("not a whole number of ticks"),
        "{err}"
    );
}

#[test]
fn datetimes_need_an_epoch() {
    let err = parse(&format!(
        "version = 1\n{}",
        order(1, "\"2022-01-01 00:00:05\"", "\"Price\" = 1")
    ))
    .unwrap_err();
    assert!(err.to_string().contains("market.epoch"), "{err}");
    let s = parse(&format!(
        "version = 1\n[market]\nepoch = \"2022-01-01T00:00:00\"\n{}",
        order(1, "\"2022-01-01 00:00:05\"", "\"Price\" = 1")
    ))
    .unwrap();
    assert_eq!(s.inputs[0].time, Time(5));
    assert!(parse(&format!("version = 1\n{}", order(1, "-3", "\"Price\" = 1"))).is_err());
}

#[test]
fn order_ids_must_be_unique() {
    let err = parse(&format!(
        "version = 1\n{}{}",
        order(4, "0", "\"Price\" = 1"),
        order(4, "1", "\"Price\" = 1")
    ))
    .unwrap_err();
    assert!(err.to_string().contains("used twice"), "{err}");
}

#[test]
fn missing_price_means_market() {
    let s = parse(&format!("version = 1\n{}", order(1, "0", ""))).unwrap();
    let Action::Submit(r) = &s.inputs[0].action else {
        panic!()
    };
    assert!(r.market);
    let err = parse(&format!(
        "version = 1\n{}",
        order(1, "0", "\"Type\" = \"limit\"")
    ))
    .unwrap_err();
    assert!(err.to_string().contains("(Order ID 1).Price"), "{err}");
    let err = parse(&format!(
        "version = 1\n{}",
        order(1, "0", "\"Expiration\" = 5")
    ))
    .unwrap_err();
    assert!(err.to_string().contains("(Order ID 1).Expiration"), "{err}");
}

#[test]
fn inputs_are_sorted_by_time_stably() {
    let s = parse(&format!(
        "version = 1\n{}{}{}[[cancels]]\n\"Order ID\" = 1\n\"Timestamp\" = 3\n",
        order(1, "5", "\"Price\" = 1"),
        order(2, "3", "\"Price\" = 1"),
        order(3, "3", "\"Price\" = 1"),
    ))
    .unwrap();
    let seen: Vec<(u64, Option<u64>)> = s
        .inputs
        .iter()
        .map(|i| {
            (
                i.time.0,
                match &i.action {
                    Action::Submit(r) => Some(r.order_id.0),
                    _ => None,
                },
            )
        })
        .collect();
    assert_eq!(seen, [(3, Some(2)), (3, Some(3)), (3, None), (5, Some(1))]);
}

#[test]
fn agents_are_validated_and_numbered() {
    let base = "version = 1\n[market]\nstop_time = 100\n";
    let s = parse(&format!(
        "{base}[[agents]]\ndevice_id = 7\narchetype = \"hvac\"\nquantity = 2\nprice = \"0.30\"\nduration = 60\n\
         [[agents]]\ndevice_id = 8\narchetype = \"battery\"\nquantity = 1\nlow = 1\nhigh = 2\nduration = 60\ninterval = 10\n"
    ))
    .unwrap();
    assert_eq!(s.agents[0].id_base, AGENT_ID_STRIDE);
    assert_eq!(s.agents[1].id_base, 2 * AGENT_ID_STRIDE);
    assert_ne!(s.agents[0].seed, s.agents[1].seed);

    let err = parse(&format!("{base}[[agents]]\ndevice_id = 7\narchetype = \"battery\"\nquantity = 1\nlow = 2\nhigh = 1\nduration = 6\n")).unwrap_err();
    assert!(err.to_string().contains("agents[0]"), "{err}");
    let err = parse(&format!(
        "{base}[[agents]]\ndevice_id = 7\narchetype = \"pv\"\nquantity = 1\nduration = 6\n"
    ))
    .unwrap_err();
    assert!(err.to_string().contains("need `price`"), "{err}");
    let err = parse("version = 1\n[[agents]]\ndevice_id = 7\narchetype = \"hvac\"\nquantity = 1\nprice = 1\nduration = 6\ninterval = 5\n").unwrap_err();
    assert!(err.to_string().contains("market.stop_time"), "{err}");

    let err = parse(&format!(
        "{base}{}[[agents]]\ndevice_id = 7\narchetype = \"hvac\"\nquantity = 1\nprice = 1\nduration = 6\n",
        order(AGENT_ID_STRIDE + 3, "0", "\"Price\" = 1")
    ))
    .unwrap_err();
    assert!(err.to_string().contains("reserved for agents"), "{err}");
}

#[test]
fn convergence_section_generates_orders_and_p_star() {
    let text = "version = 1\n[market]\nseed = 3\n[convergence]\nperiods = 2\nperiod = 50\nduration = 5\nexpiration = 50\nfirst_order_id = 101\n\
                demand = [{ price = 5, quantity = 1 }, { price = 4, quantity = 1 }, { price = 3, quantity = 1 }]\n\
                supply = [{ price = 1, quantity = 1 }, { price = 2, quantity = 1 }, { price = 3, quantity = 1 }]\n";
    let s = parse(text).unwrap();
    assert_eq!(s.equilibrium, Some(Price(300)));
    assert_eq!(s.inputs.len(), 12);
    let ids: Vec<OrderId> = s
        .inputs
        .iter()
        .filter_map(|i| match &i.action {
            Action::Submit(r) => Some(r.order_id),
            _ => None,
        })
        .collect();
    assert_eq!(ids.iter().min(), Some(&OrderId(101)));
    assert_eq!(ids.iter().max(), Some(&OrderId(112)));
    let other = Scenario::parse(
        text,
        &Overrides {
            seed: Some(4),
            ..Default::default()
        },
    )
    .unwrap();
    assert_ne!(other.inputs, s.inputs);

    let err = parse(
        &text
            .replace("price = 5", "price = 0.5")
            .replace("price = 4", "price = 0.4")
            .replace(
                "price = 3, quantity = 1 }]\nsupply",
                "price = 0.3, quantity = 1 }]\nsupply",
            ),
    )
    .unwrap_err();
    assert!(err.to_string().contains("do not cross"), "{err}");
}

#[test]
fn overrides_replace_file_settings() {
    let text = "version = 1\n[market]\nresidual_mode = \"deferred\"\n[tariff]\nper_kwh = \"0.01\"\nper_transaction = \"0.10\"\n";
    let s = parse(text).unwrap();
    assert_eq!(s.config.residual_mode, ResidualMode::Deferred);
    assert_eq!(
        (s.config.tariff.per_kwh, s.config.tariff.per_transaction),
        (Price(1), Price(10))
    );
    let o = Overrides {
        residual_mode: Some(ResidualMode::Immediate),
        tariff_per_kwh: Some("0.07".into()),
        ..Default::default()
    };
    let s = Scenario::parse(text, &o).unwrap();
    assert_eq!(s.config.residual_mode, ResidualMode::Immediate);
    assert_eq!(s.config.tariff.per_kwh, Price(7));
}
