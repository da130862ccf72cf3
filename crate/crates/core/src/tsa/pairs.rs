//! Reference query pairs on a concert/singer schema, used to measure the
//! discriminating power of the fuzzer.

use crate::model::{parse_dump, Database};

pub const PAIR_SCHEMA: &str = r#"
CREATE TABLE "stadium" (
  "Stadium_ID" INTEGER PRIMARY KEY,
  "Location" TEXT,
  "Name" TEXT,
  "Capacity" INTEGER,
  "Highest" INTEGER,
  "Lowest" INTEGER,
  "Average" INTEGER
);
CREATE TABLE "singer" (
  "Singer_ID" INTEGER PRIMARY KEY,
  "Name" TEXT,
  "Country" TEXT,
  "Song_Name" TEXT,
  "Song_release_year" TEXT,
  "Age" INTEGER,
  "Is_male" BOOLEAN
);
CREATE TABLE "concert" (
  "concert_ID" INTEGER PRIMARY KEY,
  "concert_Name" TEXT,
  "Theme" TEXT,
  "Stadium_ID" INTEGER REFERENCES "stadium" ("Stadium_ID"),
  "Year" INTEGER
);
CREATE TABLE "singer_in_concert" (
  "concert_ID" INTEGER,
  "Singer_ID" INTEGER,
  PRIMARY KEY ("concert_ID", "Singer_ID"),
  FOREIGN KEY ("concert_ID") REFERENCES "concert" ("concert_ID"),
  FOREIGN KEY ("Singer_ID") REFERENCES "singer" ("Singer_ID")
);
INSERT INTO "stadium" VALUES (1, 'Raith Rovers', 'Stark''s Park', 10104, 4812, 1294, 2106);
INSERT INTO "stadium" VALUES (2, 'Ayr United', 'Somerset Park', 11998, 2363, 1057, 1477);
INSERT INTO "singer" VALUES (1, 'Joe Sharp', 'Netherlands', 'You', '1992', 52, 'F');
INSERT INTO "singer" VALUES (2, 'Timbaland', 'United States', 'Dangerous', '2008', 32, 'T');
INSERT INTO "singer" VALUES (3, 'Justin Brown', 'France', 'Hey Oh', '2013', 29, 'T');
INSERT INTO "concert" VALUES (1, 'Auditions', 'Free choice', 1, 2014);
INSERT INTO "concert" VALUES (2, 'Super bootcamp', 'Free choice 2', 2, 2015);
INSERT INTO "singer_in_concert" VALUES (1, 2);
INSERT INTO "singer_in_concert" VALUES (2, 3);
"#;

pub fn pair_schema() -> Database {
    let mut db = parse_dump(PAIR_SCHEMA).expect("pair schema parses");
    db.name = "concert_singer".into();
    db
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueryPair {
    pub name: &'static str,
    pub gold: &'static str,
    pub predicted: &'static str,
}

const fn pair(name: &'static str, gold: &'static str, predicted: &'static str) -> QueryPair {
    QueryPair { name, gold, predicted }
}

/// Pairs that return the same result on every database of the schema.
pub fn equivalent_pairs() -> Vec<QueryPair> {
    vec![
        pair(
            "explicit join vs comma join",
            "SELECT T2.Name, T1.concert_Name FROM concert AS T1 JOIN stadium AS T2 ON T1.Stadium_ID = T2.Stadium_ID",
            "SELECT stadium.Name, concert.concert_Name FROM concert, stadium WHERE concert.Stadium_ID = stadium.Stadium_ID",
        ),
        pair(
            "negated comparison",
            "SELECT count(*) FROM singer WHERE Age > 30",
            "SELECT count(*) FROM singer WHERE NOT Age <= 30",
        ),
        pair(
            "between vs two bounds",
            "SELECT Name FROM singer WHERE Age BETWEEN 20 AND 30",
            "SELECT Name FROM singer WHERE Age >= 20 AND Age <= 30",
        ),
        pair(
            "disjunction vs IN list",
            "SELECT Name FROM singer WHERE Country = 'France' OR Country = 'Netherlands'",
            "SELECT Name FROM singer WHERE Country IN ('France', 'Netherlands')",
        ),
        pair(
            "distinct vs group by",
            "SELECT DISTINCT Country FROM singer",
            "SELECT Country FROM singer GROUP BY Country",
        ),
        pair(
            "IN subquery vs EXISTS",
            "SELECT Name FROM singer WHERE Singer_ID IN (SELECT Singer_ID FROM singer_in_concert)",
            "SELECT T1.Name FROM singer AS T1 WHERE EXISTS (SELECT 1 FROM singer_in_concert AS T2 WHERE T2.Singer_ID = T1.Singer_ID)",
        ),
        pair(
            "avg vs sum over count",
            "SELECT avg(Capacity) FROM stadium",
            "SELECT sum(Capacity) * 1.0 / count(Capacity) FROM stadium",
        ),
        pair(
            "count star vs count key",
            "SELECT Country, count(*) FROM singer GROUP BY Country",
            "SELECT Country, count(Singer_ID) FROM singer GROUP BY Country",
        ),
        pair(
            "join order swapped",
            "SELECT T2.Name FROM concert AS T1 JOIN stadium AS T2 ON T1.Stadium_ID = T2.Stadium_ID WHERE T1.Year = 2014",
            "SELECT S.Name FROM stadium AS S JOIN concert AS C ON S.Stadium_ID = C.Stadium_ID WHERE C.Year = 2014",
        ),
        pair(
            "union vs distinct disjunction",
            "SELECT Name FROM singer WHERE Age < 20 UNION SELECT Name FROM singer WHERE Age > 40",
            "SELECT DISTINCT Name FROM singer WHERE Age < 20 OR Age > 40",
        ),
    ]
}

/// Pairs that some small database separates.
pub fn inequivalent_pairs() -> Vec<QueryPair> {
    vec![
        pair(
            "strict vs non-strict bound",
            "SELECT count(*) FROM singer WHERE Age > 30",
            "SELECT count(*) FROM singer WHERE Age >= 30",
        ),
        pair("count vs count distinct", "SELECT count(*) FROM singer", "SELECT count(DISTINCT Country) FROM singer"),
        pair("max vs min", "SELECT max(Age) FROM singer", "SELECT min(Age) FROM singer"),
        pair(
            "different constant",
            "SELECT Name FROM singer WHERE Country = 'France'",
            "SELECT Name FROM singer WHERE Country = 'Netherlands'",
        ),
        pair("ascending vs descending", "SELECT Name FROM singer ORDER BY Age", "SELECT Name FROM singer ORDER BY Age DESC"),
        pair(
            "inner vs left join",
            "SELECT T1.Name FROM stadium AS T1 JOIN concert AS T2 ON T1.Stadium_ID = T2.Stadium_ID",
            "SELECT T1.Name FROM stadium AS T1 LEFT JOIN concert AS T2 ON T1.Stadium_ID = T2.Stadium_ID",
        ),
        pair(
            "and vs or",
            "SELECT Name FROM singer WHERE Age > 30 AND Country = 'France'",
            "SELECT Name FROM singer WHERE Age > 30 OR Country = 'France'",
        ),
        pair("missing distinct", "SELECT DISTINCT Country FROM singer", "SELECT Country FROM singer"),
        pair(
            "different year",
            "SELECT count(*) FROM concert WHERE Year = 2014",
            "SELECT count(*) FROM concert WHERE Year = 2015",
        ),
        pair(
            "above average vs at least average",
            "SELECT Name FROM stadium WHERE Capacity > (SELECT avg(Capacity) FROM stadium)",
            "SELECT Name FROM stadium WHERE Capacity >= (SELECT avg(Capacity) FROM stadium)",
        ),
    ]
}
