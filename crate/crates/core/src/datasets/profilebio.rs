//! Demographic profiles with a templated biography.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::error::{ensure, Error, Result};
use crate::rng::{normal, stream, weighted_index, Domain};
use crate::table::{ColumnSpec, Schema, Table, Value};

pub const COLUMNS: [&str; 8] = ["age", "salary", "sex", "birth_state", "college", "degree", "occupation", "biography"];

pub const SEXES: [&str; 2] = ["male", "female"];

pub const BIRTH_STATE_PRIOR: [(&str, f64); 10] = [
    ("California", 0.15),
    ("New York", 0.12),
    ("Texas", 0.12),
    ("Florida", 0.10),
    ("Illinois", 0.08),
    ("Washington", 0.08),
    ("Massachusetts", 0.07),
    ("Colorado", 0.07),
    ("Georgia", 0.11),
    ("Arizona", 0.10),
];

pub const COLLEGE_PRIOR: [(&str, f64); 9] = [
    ("Stanford University", 0.05),
    ("Harvard University", 0.05),
    ("University of California, Berkeley", 0.05),
    ("University of Michigan", 0.07),
    ("Arizona State University", 0.20),
    ("University of Central Florida", 0.15),
    ("Santa Monica College", 0.15),
    ("Houston Community College", 0.15),
    ("Ohio State University", 0.13),
];

pub const ELITE_COLLEGES: [&str; 3] = ["Stanford University", "Harvard University", "University of California, Berkeley"];

pub const DEGREES: [&str; 4] = ["Associate", "Bachelor", "Master", "Doctoral"];
pub const ELITE_DEGREE_PRIOR: [f64; 4] = [0.01, 0.29, 0.40, 0.30];
pub const OTHER_DEGREE_PRIOR: [f64; 4] = [0.30, 0.50, 0.15, 0.05];

pub const OCCUPATIONS: [&str; 10] = [
    "Software Developer",
    "Research Specialist",
    "Healthcare Practitioner",
    "Business Operations Analyst",
    "Education Professional",
    "Creative Content Professional",
    "Technical Services Specialist",
    "Construction Professional",
    "Customer Services Professional",
    "Public Services Coordinator",
];

pub const AGE_RANGE: (i64, i64) = (21, 65);
pub const SALARY_RANGE: (i64, i64) = (75, 200);
pub const SALARY_NOISE_STD: f64 = 15.0;

/// Inclusive integer bins. The published table lists both `[51, 60]` and
/// `[60, +inf)`; 60 stays in the earlier bin.
pub const AGE_BINS: [(i64, i64, &str); 6] = [
    (21, 25, "in the early stage of adulthood"),
    (26, 30, "in an early phase of career development"),
    (31, 40, "in a career-building stage"),
    (41, 50, "at an established professional stage"),
    (51, 60, "in an advanced career stage"),
    (61, i64::MAX, "at the late career stage"),
];

pub const SALARY_BINS: [(i64, i64, &str); 3] = [
    (i64::MIN, 110, "a comfortable, stable income"),
    (111, 150, "a strong professional income"),
    (151, i64::MAX, "a high-level executive income"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileBioRecord {
    pub age: i64,
    pub salary: i64,
    pub sex: String,
    pub birth_state: String,
    pub college: String,
    pub degree: String,
    pub occupation: String,
    pub biography: String,
}

pub fn schema() -> Schema {
    let states: Vec<&str> = BIRTH_STATE_PRIOR.iter().map(|p| p.0).collect();
    let colleges: Vec<&str> = COLLEGE_PRIOR.iter().map(|p| p.0).collect();
    Schema::new(
        "profilebio",
        vec![
            ColumnSpec::numerical(COLUMNS[0]),
            ColumnSpec::numerical(COLUMNS[1]),
            ColumnSpec::categorical(COLUMNS[2], &SEXES),
            ColumnSpec::categorical(COLUMNS[3], &states),
            ColumnSpec::categorical(COLUMNS[4], &colleges),
            ColumnSpec::categorical(COLUMNS[5], &DEGREES),
            ColumnSpec::categorical(COLUMNS[6], &OCCUPATIONS),
            ColumnSpec::text(COLUMNS[7]),
        ],
    )
}

pub fn degree_prior(college: &str) -> [f64; 4] {
    if ELITE_COLLEGES.contains(&college) {
        ELITE_DEGREE_PRIOR
    } else {
        OTHER_DEGREE_PRIOR
    }
}

/// Unnormalized occupation weights: 1 each, with the named occupations
/// overwritten for doctoral and associate degrees.
pub fn occupation_weights(degree: &str) -> [f64; 10] {
    let mut w = [1.0; 10];
    let set = |w: &mut [f64; 10], name: &str, v: f64| {
        let i = OCCUPATIONS.iter().position(|o| *o == name).expect("known occupation");
        w[i] = v;
    };
    match degree {
        "Doctoral" => {
            set(&mut w, "Research Specialist", 6.0);
            set(&mut w, "Education Professional", 4.0);
        }
        "Associate" => {
            set(&mut w, "Customer Services Professional", 5.0);
            set(&mut w, "Construction Professional", 5.0);
        }
        _ => {}
    }
    w
}

/// Salary before noise, rounding and clamping.
pub fn salary_mean(age: i64, degree: &str, occupation: &str) -> f64 {
    let mut s = 85.0;
    s += match degree {
        "Master" => 30.0,
        "Doctoral" => 50.0,
        _ => 0.0,
    };
    if occupation == "Software Developer" || occupation == "Healthcare Practitioner" {
        s += 25.0;
    }
    s + 1.2 * (age - 21) as f64
}

/// Salary for a given standard-normal draw `z`.
pub fn salary_with_noise(age: i64, degree: &str, occupation: &str, z: f64) -> i64 {
    let s = (salary_mean(age, degree, occupation) + SALARY_NOISE_STD * z).round();
    (s as i64).clamp(SALARY_RANGE.0, SALARY_RANGE.1)
}

pub fn salary_model<R: Rng + ?Sized>(age: i64, degree: &str, occupation: &str, rng: &mut R) -> Result<i64> {
    ensure!((AGE_RANGE.0..=AGE_RANGE.1).contains(&age), Precondition, "age {age} outside [21, 65]");
    Ok(salary_with_noise(age, degree, occupation, normal(rng)))
}

fn bin_of(bins: &[(i64, i64, &'static str)], v: i64) -> &'static str {
    bins.iter().find(|b| b.0 <= v && v <= b.1).map(|b| b.2).expect("bins cover their domain")
}

pub fn age_descriptor(age: i64) -> Result<&'static str> {
    ensure!(age >= AGE_BINS[0].0, Precondition, "age {age} below the first bin");
    Ok(bin_of(&AGE_BINS, age))
}

pub fn salary_descriptor(salary: i64) -> &'static str {
    bin_of(&SALARY_BINS, salary)
}

pub fn pronoun(sex: &str) -> Result<&'static str> {
    match sex {
        "male" => Ok("He"),
        "female" => Ok("She"),
        _ => Err(Error::Precondition(format!("unknown sex `{sex}`"))),
    }
}

/// The biography template with explicit descriptors.
#[allow(clippy::too_many_arguments)]
pub fn fill_template(
    sex: &str,
    age_desc: &str,
    birth_state: &str,
    college: &str,
    degree: &str,
    occupation: &str,
    salary_desc: &str,
) -> Result<String> {
    let p = pronoun(sex)?;
    Ok(format!(
        "This {sex} individual is {age_desc}. {p} was born in {birth_state} and completed higher education at \
         {college}, earning a {degree} degree. {p} works as a {occupation}. {p} earns {salary_desc}."
    ))
}

pub fn render_biography(r: &ProfileBioRecord) -> Result<String> {
    fill_template(
        &r.sex,
        age_descriptor(r.age)?,
        &r.birth_state,
        &r.college,
        &r.degree,
        &r.occupation,
        salary_descriptor(r.salary),
    )
}

/// Slot values read back from a biography.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BioSlots {
    pub sex: String,
    pub age_desc: String,
    pub pronouns: [String; 3],
    pub birth_state: String,
    pub college: String,
    pub degree: String,
    pub occupation: String,
    pub salary_desc: String,
}

/// Parse a biography against the template's fixed text. `None` when the
/// fixed text is not found in order.
pub fn parse_biography(text: &str) -> Option<BioSlots> {
    let mut rest = text.trim().strip_prefix("This ")?;
    let mut take = |delim: &str| -> Option<String> {
        let i = rest.find(delim)?;
        let slot = rest[..i].into();
        rest = &rest[i + delim.len()..];
        Some(slot)
    };
    let sex = take(" individual is ")?;
    let age_desc = take(". ")?;
    let p0 = take(" was born in ")?;
    let birth_state = take(" and completed higher education at ")?;
    let college = take(", earning a ")?;
    let degree = take(" degree. ")?;
    let p1 = take(" works as a ")?;
    let occupation = take(". ")?;
    let p2 = take(" earns ")?;
    let salary_desc = rest.strip_suffix('.')?.into();
    Some(BioSlots { sex, age_desc, pronouns: [p0, p1, p2], birth_state, college, degree, occupation, salary_desc })
}

pub fn sample_record<R: Rng + ?Sized>(rng: &mut R) -> ProfileBioRecord {
    let sex = SEXES[rng.gen_range(0..2)];
    let w: Vec<f64> = BIRTH_STATE_PRIOR.iter().map(|p| p.1).collect();
    let birth_state = BIRTH_STATE_PRIOR[weighted_index(rng, &w)].0;
    let w: Vec<f64> = COLLEGE_PRIOR.iter().map(|p| p.1).collect();
    let college = COLLEGE_PRIOR[weighted_index(rng, &w)].0;
    let degree = DEGREES[weighted_index(rng, &degree_prior(college))];
    let occupation = OCCUPATIONS[weighted_index(rng, &occupation_weights(degree))];
    let age = rng.gen_range(AGE_RANGE.0..=AGE_RANGE.1);
    let salary = salary_with_noise(age, degree, occupation, normal(rng));
    let mut r = ProfileBioRecord {
        age,
        salary,
        sex: sex.into(),
        birth_state: birth_state.into(),
        college: college.into(),
        degree: degree.into(),
        occupation: occupation.into(),
        biography: String::new(),
    };
    r.biography = render_biography(&r).expect("fields come from the priors");
    r
}

pub fn gen_profilebio(n: usize, seed: u64) -> Result<Table> {
    ensure!(n >= 1, Precondition, "need at least one row");
    let mut table = Table::new(schema());
    for i in 0..n {
        let r = sample_record(&mut stream(seed, Domain::DataGen, i as u64));
        table.push_row(vec![
            Value::Num(r.age as f64),
            Value::Num(r.salary as f64),
            r.sex.into(),
            r.birth_state.into(),
            r.college.into(),
            r.degree.into(),
            r.occupation.into(),
            r.biography.into(),
        ])?;
    }
    Ok(table)
}
