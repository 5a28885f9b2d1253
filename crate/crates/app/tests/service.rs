mod common;

use common::{answer, Fixture, DB, DRUGS};
use medsql_app::service::{CohortRequest, FlagOverrides, QueryRequest, VizRequest, VIZ_UNAVAILABLE};
use medsql_app::session::{Status, RESULT_CAPACITY};
use medsql_app::ApiError;
use medsql_core::execution_sandbox::AbstainReason;
use medsql_core::llm_gateway::{read_audit_log, scan_audit_log};
use medsql_core::viz_spec::VizKind;
use medsql_core::{Backend, Value};

fn ask(session: Option<&str>, question: &str) -> QueryRequest {
    QueryRequest {
        session_id: session.map(String::from),
        question: question.into(),
        database: DB.into(),
        model: None,
        flags: FlagOverrides::default(),
    }
}

const DRUG_COUNTS: &str = "SELECT prescriptions.drug, COUNT(*) AS prescription_count FROM prescriptions GROUP BY prescriptions.drug";

#[test]
fn question_to_rows_to_chart() {
    let fx = Fixture::new();
    let state = fx.state(Backend::scripted([
        answer(DRUG_COUNTS),
        "VizType: 1; Xaxis: drug; Yaxis: prescription_count".to_string(),
    ]));
    let resp = state.handle_query(ask(Some("s1"), "How often was each drug prescribed?")).unwrap();
    assert_eq!(resp.status, Status::Ok);
    assert_eq!(resp.attempts.len(), 1);
    assert_eq!(resp.total_rows, DRUGS.len());
    let mut got: Vec<(String, i64)> = resp
        .rows
        .iter()
        .map(|r| match (&r[0], &r[1]) {
            (Value::Text(d), Value::Int(n)) => (d.clone(), *n),
            other => panic!("{other:?}"),
        })
        .collect();
    got.sort();
    let mut expected: Vec<(String, i64)> = DRUGS
        .iter()
        .map(|d| (d.to_string(), fx.data.prescriptions.iter().filter(|p| p.1 == *d).count() as i64))
        .collect();
    expected.sort();
    assert_eq!(got, expected);

    let viz = state
        .handle_visualize(VizRequest {
            session_id: "s1".into(),
            result_id: resp.result_id.clone().unwrap(),
            question: None,
            model: None,
        })
        .unwrap();
    assert_eq!(viz.status, Status::Ok);
    let chart = viz.chart.unwrap();
    assert_eq!(chart.kind, VizKind::BarChart);
    assert_eq!(chart.title, "How often was each drug prescribed?");
    assert_eq!(chart.x_values.len(), DRUGS.len());

    let audit = read_audit_log(&fx.audit_path()).unwrap();
    assert_eq!(audit.len(), 2);
    assert!(audit[1].prompt.contains("drug\nprescription_count"));
}

#[test]
fn scatter_over_two_numeric_columns() {
    let fx = Fixture::new();
    let state = fx.state(Backend::scripted([
        answer("SELECT admissions.age, patients.anchor_age FROM admissions JOIN patients ON admissions.subject_id = patients.subject_id"),
        "VizType: 0; Xaxis: age; Yaxis: anchor_age".to_string(),
    ]));
    let resp = state.handle_query(ask(None, "Admission age against anchor age")).unwrap();
    let viz = state
        .handle_visualize(VizRequest {
            session_id: resp.session_id.clone(),
            result_id: resp.result_id.unwrap(),
            question: Some("Age at admission vs anchor age".into()),
            model: None,
        })
        .unwrap();
    let chart = viz.chart.unwrap();
    assert_eq!(chart.kind, VizKind::Scatterplot);
    assert_eq!(chart.x_values.len(), fx.data.admissions.len());
    assert_eq!(chart.y_values.unwrap().len(), fx.data.admissions.len());
}

#[test]
fn malformed_chart_answers_get_one_retry() {
    let fx = Fixture::new();
    let state = fx.state(Backend::scripted([
        answer(DRUG_COUNTS),
        "I would draw a bar chart.".to_string(),
        "VizType: 1; Xaxis: drug; Yaxis: prescription_count".to_string(),
        answer(DRUG_COUNTS),
        "VizType: 1; Xaxis: medication; Yaxis: prescription_count".to_string(),
        "VizType: 7; Xaxis: drug".to_string(),
    ]));
    let first = state.handle_query(ask(Some("s"), "Prescriptions per drug")).unwrap();
    let viz = |result_id: String| {
        state
            .handle_visualize(VizRequest {
                session_id: "s".into(),
                result_id,
                question: None,
                model: None,
            })
            .unwrap()
    };
    let ok = viz(first.result_id.unwrap());
    assert_eq!((ok.status, ok.attempts), (Status::Ok, 2));

    let second = state.handle_query(ask(Some("s"), "Prescriptions per drug again")).unwrap();
    let failed = viz(second.result_id.unwrap());
    assert_eq!((failed.status, failed.attempts), (Status::Abstained, 2));
    assert_eq!(failed.reason, Some(VIZ_UNAVAILABLE));
    assert!(failed.chart.is_none());
    let audit = read_audit_log(&fx.audit_path()).unwrap();
    assert!(audit[5].prompt.contains("medication"));
}

#[test]
fn unknown_names_are_request_errors() {
    let fx = Fixture::new();
    let state = fx.state(Backend::scripted(Vec::<String>::new()));
    let mut req = ask(None, "q");
    req.database = "eicu".into();
    assert!(matches!(state.handle_query(req), Err(ApiError::NotFound(_))));
    let mut req = ask(None, "q");
    req.model = Some("gpt-2".into());
    assert!(matches!(state.handle_query(req), Err(ApiError::BadRequest(_))));
    let mut req = ask(None, "q");
    req.flags.max_attempts = Some(0);
    assert!(matches!(state.handle_query(req), Err(ApiError::BadRequest(_))));
    assert!(matches!(state.handle_query(ask(None, "  ")), Err(ApiError::BadRequest(_))));
    assert!(matches!(state.handle_schema("eicu"), Err(ApiError::NotFound(_))));
    assert!(matches!(state.handle_history("nope"), Err(ApiError::NotFound(_))));
    assert!(read_audit_log(&fx.audit_path()).map(|a| a.is_empty()).unwrap_or(true));
}

#[test]
fn abstention_is_a_response_not_an_error() {
    let fx = Fixture::new();
    let bad = answer("SELECT admissions.total_cost FROM admissions");
    let state = fx.state(Backend::scripted([bad.clone(), bad]));
    let resp = state.handle_query(ask(Some("s"), "Total cost per admission?")).unwrap();
    assert_eq!(resp.status, Status::Abstained);
    assert_eq!(resp.abstain_reason, Some(AbstainReason::RetriesExhausted));
    assert_eq!(resp.attempts.len(), 2);
    assert!(resp.result_id.is_none() && resp.rows.is_empty());
    let json = serde_json::to_value(&resp).unwrap();
    assert_eq!(json["status"], "abstained");
    assert_eq!(json["abstain_reason"], "retries_exhausted");
    let history = state.handle_history("s").unwrap();
    assert_eq!(history.turns[0].status, Status::Abstained);
}

#[test]
fn flag_overrides_reach_the_pipeline() {
    let fx = Fixture::new();
    let bad = answer("SELECT admissions.total_cost FROM admissions");
    let state = fx.state(Backend::scripted([bad]));
    let mut req = ask(None, "Total cost?");
    req.flags.max_attempts = Some(1);
    req.flags.k_demos = Some(0);
    req.flags.include_schema = Some(false);
    let resp = state.handle_query(req).unwrap();
    assert_eq!(resp.attempts.len(), 1);
    let prompt = &read_audit_log(&fx.audit_path()).unwrap()[0].prompt;
    assert!(!prompt.contains("Table: admissions"));
    assert!(!prompt.contains("How many patients are female?"));
}

#[test]
fn display_rows_are_capped_with_the_total_reported() {
    let fx = Fixture::new();
    let mut state = fx.state(Backend::scripted([answer("SELECT admissions.hadm_id FROM admissions")]));
    state.display_rows = 7;
    let resp = state.handle_query(ask(None, "List admissions")).unwrap();
    assert_eq!(resp.rows.len(), 7);
    assert_eq!(resp.total_rows, fx.data.admissions.len());
    assert!(resp.truncated);
}

#[test]
fn follow_up_prompt_carries_the_earlier_turn() {
    let fx = Fixture::new();
    let first_sql = "SELECT COUNT(*) FROM patients WHERE patients.gender = 'F'";
    let state = fx.state(Backend::scripted([
        answer(first_sql),
        answer("SELECT COUNT(*) FROM patients WHERE patients.gender = 'F' AND patients.anchor_age > 50"),
    ]));
    let a = state.handle_query(ask(Some("s"), "How many female patients are there?")).unwrap();
    let b = state.handle_query(ask(Some("s"), "Only those older than 50?")).unwrap();
    assert_eq!((a.turn, b.turn), (0, 1));
    let expected = fx.data.patients.iter().filter(|p| p.gender == "F" && p.anchor_age > 50).count() as i64;
    assert_eq!(b.rows, vec![vec![Value::Int(expected)]]);

    let audit = read_audit_log(&fx.audit_path()).unwrap();
    assert_eq!(audit.len(), 2);
    assert!(audit[1].prompt.contains("How many female patients are there?"));
    assert!(audit[1].prompt.contains(a.sql.as_deref().unwrap()));

    // the script is exhausted, but the prompt is still logged
    let other = state.handle_query(ask(Some("t"), "Only those older than 50?")).unwrap();
    assert_eq!(other.status, Status::Abstained);
    let audit = read_audit_log(&fx.audit_path()).unwrap();
    assert!(!audit[2].prompt.contains("How many female patients are there?"));
}

#[test]
fn sessions_do_not_share_results() {
    let fx = Fixture::new();
    let state = fx.state(Backend::scripted([
        answer("SELECT patients.gender, COUNT(*) AS n FROM patients GROUP BY patients.gender"),
        answer("SELECT COUNT(*) AS n FROM admissions"),
    ]));
    let a = state.handle_query(ask(Some("a"), "Patients by gender")).unwrap();
    let b = state.handle_query(ask(Some("b"), "How many admissions?")).unwrap();
    let stolen = state.handle_visualize(VizRequest {
        session_id: "b".into(),
        result_id: a.result_id.clone().unwrap(),
        question: None,
        model: None,
    });
    assert!(matches!(stolen, Err(ApiError::NotFound(_))));
    let stolen = state.handle_cohort_flow(CohortRequest {
        session_id: "b".into(),
        result_id: a.result_id.unwrap(),
    });
    assert!(matches!(stolen, Err(ApiError::NotFound(_))));
    let hb = state.handle_history("b").unwrap();
    assert_eq!(hb.turns.len(), 1);
    assert_eq!(hb.turns[0].result_id, b.result_id);
    assert_eq!(state.handle_history("a").unwrap().turns[0].question, "Patients by gender");
}

#[test]
fn old_results_expire() {
    let fx = Fixture::new();
    let n = RESULT_CAPACITY + 1;
    let state = fx.state(Backend::scripted(vec![answer("SELECT COUNT(*) AS n FROM patients"); n]));
    let ids: Vec<String> = (0..n)
        .map(|i| state.handle_query(ask(Some("s"), &format!("count {i}"))).unwrap().result_id.unwrap())
        .collect();
    let viz = |id: &str| {
        state.handle_cohort_flow(CohortRequest {
            session_id: "s".into(),
            result_id: id.into(),
        })
    };
    assert!(matches!(viz(&ids[0]), Err(ApiError::NotFound(_))));
    assert!(viz(&ids[n - 1]).is_ok());
    assert_eq!(state.handle_history("s").unwrap().turns.len(), n);
}

#[test]
fn schema_is_stable_and_structured() {
    let fx = Fixture::new();
    let state = fx.state(Backend::scripted(Vec::<String>::new()));
    let a = state.handle_schema(DB).unwrap();
    let b = state.handle_schema(DB).unwrap();
    assert_eq!(a.text, b.text);
    let names: Vec<&str> = a.tables.iter().map(|t| t.name.as_str()).collect();
    assert_eq!(names, ["admissions", "diagnoses_icd", "patients", "prescriptions"]);
    assert!(a.text.contains("Table: patients"));
    let json = serde_json::to_value(&a).unwrap();
    assert_eq!(json["status"], "ok");
    assert_eq!(json["tables"][2]["columns"][0]["name"], "subject_id");
}

#[test]
fn cohort_flow_counts_each_filter() {
    let fx = Fixture::new();
    let sql = "SELECT patients.subject_id FROM patients WHERE patients.gender = 'F' AND patients.subject_id IN \
               (SELECT admissions.subject_id FROM admissions WHERE admissions.age > 60 AND admissions.hadm_id IN \
               (SELECT diagnoses_icd.hadm_id FROM diagnoses_icd WHERE diagnoses_icd.icd_code = 'I10'))";
    let state = fx.state(Backend::scripted([answer(sql)]));
    let resp = state.handle_query(ask(Some("s"), "Female patients admitted over 60 with hypertension")).unwrap();
    let flow = state
        .handle_cohort_flow(CohortRequest {
            session_id: "s".into(),
            result_id: resp.result_id.unwrap(),
        })
        .unwrap();

    let d = &fx.data;
    let hyper: Vec<i64> = d.diagnoses.iter().filter(|x| x.1 == "I10").map(|x| x.0).collect();
    let older: Vec<i64> = d
        .admissions
        .iter()
        .filter(|a| a.age > 60 && hyper.contains(&a.hadm_id))
        .map(|a| a.subject_id)
        .collect();
    let women = d
        .patients
        .iter()
        .filter(|p| p.gender == "F" && older.contains(&p.subject_id))
        .count();
    let counts: Vec<Option<i64>> = flow.steps.iter().map(|s| s.row_count).collect();
    assert_eq!(counts, [Some(hyper.len() as i64), Some(older.len() as i64), Some(women as i64)]);
    assert_eq!(resp.total_rows, women);
    assert_eq!(flow.steps[2].depth, 0);
    assert!(flow.steps[0].label.starts_with("FROM diagnoses_icd"));
}

#[test]
fn no_cell_value_leaves_through_the_service() {
    let fx = Fixture::canary();
    let sentinels = fx.data.sentinels();
    let state = fx.state(Backend::scripted([
        // conversion errors quote the offending cell; the retry prompt must not
        answer("SELECT CAST(prescriptions.drug AS INTEGER) AS d FROM prescriptions"),
        answer(DRUG_COUNTS),
        "VizType: 1; Xaxis: drug; Yaxis: prescription_count".to_string(),
        answer("SELECT CAST(prescriptions.dose_val AS DATE) AS d FROM prescriptions"),
        answer("SELECT admissions.admittime + prescriptions.dose_val AS t FROM admissions JOIN prescriptions ON admissions.hadm_id = prescriptions.hadm_id"),
        answer("SELECT admissions.insurance, AVG(admissions.age) AS mean_age FROM admissions GROUP BY admissions.insurance"),
        "VizType: 5; Xaxis: insurance".to_string(),
        "VizType: 1; Xaxis: insurance; Yaxis: mean_age".to_string(),
    ]));
    let first = state.handle_query(ask(Some("s"), "Prescriptions per drug")).unwrap();
    assert_eq!((first.status, first.attempts.len()), (Status::Ok, 2));
    assert!(first.attempts[0].error.is_some());
    assert!(first.rows.iter().flatten().any(|v| matches!(v, Value::Text(t) if t.starts_with("ZQ"))));
    state
        .handle_visualize(VizRequest {
            session_id: "s".into(),
            result_id: first.result_id.unwrap(),
            question: None,
            model: None,
        })
        .unwrap();
    let second = state.handle_query(ask(Some("s"), "Doses as dates")).unwrap();
    assert_eq!(second.status, Status::Abstained);
    let mut req = ask(Some("s"), "Mean age by insurance");
    req.flags.max_attempts = Some(1);
    let third = state.handle_query(req).unwrap();
    let viz = state
        .handle_visualize(VizRequest {
            session_id: "s".into(),
            result_id: third.result_id.unwrap(),
            question: None,
            model: None,
        })
        .unwrap();
    assert_eq!((viz.status, viz.attempts), (Status::Ok, 2));

    let audit = read_audit_log(&fx.audit_path()).unwrap();
    assert_eq!(audit.len(), 8);
    let hits = scan_audit_log(&fx.audit_path(), &sentinels).unwrap();
    assert!(hits.is_empty(), "{hits:?}");
    // the scan itself works on this log
    assert!(!scan_audit_log(&fx.audit_path(), &["prescriptions".to_string()]).unwrap().is_empty());
}
