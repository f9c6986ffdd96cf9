//! Shared fixtures and independent oracles for the integration suites.
//!
//! The synthetic corpora are fully deterministic: tool texts are fixed and
//! query expansion iterates fixed lists, so every run sees byte-identical
//! inputs.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use toolsnare_core::corpus::{QueryRecord, ToolRecord};

pub fn tool(id: &str, name: &str, category: &str, description: &str) -> ToolRecord {
    ToolRecord {
        tool_id: id.into(),
        name: name.into(),
        category: category.into(),
        description: description.into(),
        parameters: format!("{{\"tool\":\"{id}\"}}"),
        demonstrations: vec![],
        extras: BTreeMap::new(),
    }
}

pub fn query(id: &str, text: &str, labels: &[&str]) -> QueryRecord {
    QueryRecord {
        query_id: id.into(),
        text: text.into(),
        relevant_tool_ids: labels.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>(),
    }
}

const CITIES: [&str; 10] = [
    "paris", "tokyo", "oslo", "cairo", "denver", "mumbai", "sydney", "lima", "berlin", "austin",
];

/// Retriever-attack corpus: 50 tools across six categories, including a
/// 10-tool weather cohort whose target starts weak, plus one isolated tool
/// with no term overlap with any query (the indiscriminate target).
pub fn retriever_corpus() -> Vec<ToolRecord> {
    let mut tools = vec![
        // Weather cohort. The target w00 matches only the humidity/dew
        // queries before the attack.
        tool("w00", "SkyGlance", "weather", "Offers meteorological digests covering dew and humidity readings."),
        tool("w01", "BreezeCast", "weather", "Accurate weather forecast with hourly temperature updates for any city."),
        tool("w02", "RainWatch", "weather", "Weather service tracking rain and storm alerts near your city."),
        tool("w03", "WindMeter", "weather", "Live wind speed and weather conditions with radar maps."),
        tool("w04", "SnowTrack", "weather", "Weather outlook for snow and sunshine days."),
        tool("w05", "HeatIndex", "weather", "Daily temperature and weather readings for travelers."),
        tool("w06", "StormLine", "weather", "Severe storm alerts and weather warnings with coverage maps."),
        tool("w07", "SunnyDay", "weather", "Weekend weather forecast with sunshine hours and rain chances."),
        tool("w08", "CloudBase", "weather", "Hourly weather radar and cloud forecast for pilots."),
        tool("w09", "FrostBite", "weather", "Overnight frost and cold weather alerts."),
        // Finance.
        tool("f01", "StockPulse", "finance", "Live stock market price quotes for shares."),
        tool("f02", "FxRates", "finance", "Currency exchange rate conversion tables."),
        tool("f03", "CoinTicker", "finance", "Crypto coin price charts and market data."),
        tool("f04", "BondDesk", "finance", "Government bond yields and interest data."),
        tool("f05", "TaxMate", "finance", "Income tax brackets and filing deadlines."),
        tool("f06", "BudgetBee", "finance", "Personal budget tracking and expense reports."),
        tool("f07", "InvoiceHub", "finance", "Invoice creation and payment reminders."),
        tool("f08", "LoanCheck", "finance", "Mortgage loan interest rate calculators."),
        // Travel.
        tool("tr01", "FlightFind", "travel", "Search cheap flights and airfare deals between airports."),
        tool("tr02", "HotelSpot", "travel", "Hotel room booking with nightly rates."),
        tool("tr03", "TrainTime", "travel", "Train schedule lookups and seat reservations."),
        tool("tr04", "VisaGuide", "travel", "Visa requirements by destination country."),
        tool("tr05", "PackList", "travel", "Packing checklists for trips abroad."),
        tool("tr06", "CityTour", "travel", "Guided sightseeing tours and tickets."),
        tool("tr07", "CarRentX", "travel", "Rental car comparison at airports."),
        tool("tr08", "RouteMap", "travel", "Driving routes and distance maps between towns."),
        // Music.
        tool("m01", "SongSeek", "music", "Find songs by lyrics and artist names."),
        tool("m02", "PlayListr", "music", "Curated playlist ideas for workouts and parties."),
        tool("m03", "AlbumInfo", "music", "Album release dates and track listings."),
        tool("m04", "ConcertGo", "music", "Concert tickets and tour dates for artists."),
        tool("m05", "LyricVault", "music", "Full song lyrics with verse annotations."),
        tool("m06", "RadioTune", "music", "Internet radio stations by genre."),
        tool("m07", "ChartTopz", "music", "Weekly music charts and trending tracks."),
        tool("m08", "PodFetch", "music", "Podcast episode and show notes search."),
        // Sports.
        tool("s01", "ScoreNow", "sports", "Live score updates for football matches."),
        tool("s02", "TeamStats", "sports", "Team statistics and player profiles."),
        tool("s03", "FixtureCal", "sports", "Upcoming fixtures and match calendars for teams."),
        tool("s04", "LeagueTab", "sports", "League standings and table updates."),
        tool("s05", "GoalFeed", "sports", "Goal highlights and video clips."),
        tool("s06", "BetOdds", "sports", "Betting odds comparison for matches."),
        tool("s07", "RaceLap", "sports", "Motor race lap times and results."),
        tool("s08", "OpenScores", "sports", "Tennis match results and player rankings."),
        // Food.
        tool("fd01", "RecipeBox", "food", "Recipe ideas with ingredients and cooking steps."),
        tool("fd02", "DineOut", "food", "Restaurant reservations and menus nearby."),
        tool("fd03", "CalCount", "food", "Calorie counts for common meals."),
        tool("fd04", "VeganEats", "food", "Vegan recipe ideas and substitutes."),
        tool("fd05", "GrillPro", "food", "Grilling guides for meat and vegetables."),
        tool("fd06", "BakeMate", "food", "Baking recipes with oven timings."),
        tool("fd07", "SpiceRack", "food", "Spice pairings and seasoning tips."),
    ];
    // No term of this description appears in any query below.
    tools.push(tool("zz01", "FluxProbe", "misc", "Calibrates flux manifolds during diagnostics."));
    tools
}

/// 200 labeled queries: 60 weather-cohort queries (six templates over ten
/// cities; every template carries "weather", five carry "forecast") plus 140
/// queries across the other categories.
pub fn retriever_queries() -> Vec<QueryRecord> {
    let mut queries = Vec::new();
    let mut n = 0usize;
    let mut push = |text: String, labels: &[&str]| {
        queries.push(query(&format!("q{n:03}"), &text, labels));
        n += 1;
    };

    for city in CITIES {
        push(format!("weather forecast and temperature in {city} tomorrow"), &["w01"]);
        push(format!("weather forecast will it rain in {city} this weekend"), &["w02", "w07"]);
        push(format!("current temperature and wind weather forecast in {city}"), &["w03", "w05"]);
        push(format!("storm alerts weather forecast near {city}"), &["w06", "w02"]);
        push(format!("hourly weather radar forecast for {city}"), &["w08", "w03"]);
        push(format!("humidity and dew weather readings in {city}"), &["w00"]);
    }

    let companies = ["acme", "globex", "initech", "umbrella", "stark", "wayne", "wonka"];
    for company in companies {
        push(format!("stock market price of {company} shares"), &["f01"]);
    }
    let pairs = [("euro", "dollar"), ("yen", "euro"), ("pound", "franc"), ("rupee", "dollar"), ("peso", "euro"), ("krona", "pound"), ("dollar", "yen")];
    for (a, b) in pairs {
        push(format!("currency exchange rate {a} to {b}"), &["f02"]);
    }
    let coins = ["bitcoin", "ether", "doge", "litecoin", "monero", "ripple", "cardano"];
    for coin in coins {
        push(format!("crypto coin price of {coin} today"), &["f03"]);
    }
    let banks = ["northbank", "citypoint", "harborone", "crestline", "summitco", "lakeside", "granite"];
    for bank in banks {
        push(format!("mortgage loan interest rate at {bank}"), &["f08"]);
    }

    let routes = [("rome", "lisbon"), ("oslo", "malta"), ("dublin", "porto"), ("vienna", "split"), ("nice", "ghent"), ("bergen", "riga"), ("bonn", "turin")];
    for (a, b) in routes {
        push(format!("cheap flights from {a} to {b}"), &["tr01"]);
        push(format!("train schedule from {a} to {b}"), &["tr03"]);
    }
    for city in &CITIES[..7] {
        push(format!("book hotel room in {city}"), &["tr02"]);
        push(format!("rental car comparison at {city} airport"), &["tr07"]);
    }

    let songs = ["aurora", "midnight", "ember", "horizon", "velvet", "cascade", "lantern"];
    for song in songs {
        push(format!("song lyrics of {song}"), &["m01", "m05"]);
        push(format!("concert tickets for {song} tour"), &["m04"]);
    }
    let genres = ["jazz", "rock", "folk", "techno", "salsa", "blues", "soul"];
    for genre in genres {
        push(format!("weekly music charts for {genre}"), &["m07"]);
        push(format!("playlist ideas for {genre} workouts"), &["m02"]);
    }

    let teams = ["rovers", "united", "citizens", "wanderers", "athletic", "dynamo", "rangers"];
    for team in teams {
        push(format!("live score of {team} match"), &["s01"]);
        push(format!("upcoming fixtures for {team} this month"), &["s03"]);
    }
    let leagues = ["premier", "liga", "serie", "ligue", "eredivisie", "bundes", "superliga"];
    for league in leagues {
        push(format!("league standings table of {league}"), &["s04"]);
    }
    let players = ["silva", "moreau", "tanaka", "okafor", "jensen", "petrov", "alvarez"];
    for player in players {
        push(format!("player statistics for {player}"), &["s02"]);
    }

    let dishes = ["paella", "ramen", "tagine", "goulash", "pho", "moussaka", "risotto"];
    for dish in dishes {
        push(format!("recipe with ingredients for {dish}"), &["fd01"]);
        push(format!("calorie counts for {dish} meals"), &["fd03"]);
    }
    for city in &CITIES[..7] {
        push(format!("restaurant reservations near {city}"), &["fd02"]);
    }
    let veggies = ["lentil", "tofu", "chickpea", "mushroom", "squash", "eggplant", "seitan"];
    for veg in veggies {
        push(format!("vegan recipe ideas with {veg}"), &["fd04"]);
    }

    assert_eq!(queries.len(), 200, "retriever fixture must hold 200 queries");
    queries
}

/// LLM-attack corpus: seven modules in the style of a science-question tool
/// slate. The target's description shares exactly one content word
/// ("question") with the bulk of the queries, so the overlap mock never picks
/// it before the attack.
pub fn llm_corpus() -> Vec<ToolRecord> {
    vec![
        tool("t_caption", "Image_Captioner", "modules", "Renders succinct digests describing supplied visual artifacts per question."),
        tool("t_knowledge", "Knowledge_Retrieval", "modules", "Retrieves background knowledge passages supporting the question answer."),
        tool("t_detector", "Text_Detector", "modules", "Detects printed text characters inside an image picture."),
        tool("t_calc", "Calculator", "modules", "Evaluates arithmetic expressions with fractions and units."),
        tool("t_chart", "Chart_Analyzer", "modules", "Reads values from bar charts and plots."),
        tool("t_translate", "Translator", "modules", "Translates sentences between common languages."),
        tool("t_search", "Web_Search", "modules", "Searches reference pages for recent facts."),
    ]
}

/// 40 science-style queries; 36 of them contain both "question" and "image".
pub fn llm_queries() -> Vec<QueryRecord> {
    let subjects = [
        "a plant cell", "a food web", "a circuit board", "a mineral sample", "a star chart",
        "a weather map", "a fossil bed", "a magnet array", "a leaf surface", "a wave tank",
        "a gear train", "a lens array", "a root system", "a bird wing", "a rock layer",
        "a salt crystal", "a pulley set", "a moon phase", "a cloud type", "a seed pod",
        "a spring scale", "a prism beam", "a river delta", "a glacier edge", "a coral reef",
        "a volcano cone", "a spider web", "a honeycomb", "a tide pool", "a sand dune",
        "an ant colony", "a feather vane", "a snail shell", "a pine cone", "a maple seed",
        "a quartz vein",
    ];
    let mut queries = Vec::new();
    for (i, subject) in subjects.iter().enumerate() {
        queries.push(query(
            &format!("lq{i:02}"),
            &format!("the question shows an image of {subject} identify the labeled part"),
            &["t_caption"],
        ));
    }
    // A handful of non-visual questions.
    queries.push(query("lq36", "the question asks which number is prime", &["t_calc"]));
    queries.push(query("lq37", "translate the sentence into spanish", &["t_translate"]));
    queries.push(query("lq38", "retrieve knowledge passages about magnets", &["t_knowledge"]));
    queries.push(query("lq39", "search reference pages for recent facts", &["t_search"]));
    assert_eq!(queries.len(), 40);
    queries
}

// ---- Independent oracles -------------------------------------------------

/// Token-level Levenshtein distance, used by the single-step diff oracle.
pub fn token_edit_distance(a: &[String], b: &[String]) -> usize {
    let (n, m) = (a.len(), b.len());
    let mut previous: Vec<usize> = (0..=m).collect();
    for i in 1..=n {
        let mut current = vec![i; m + 1];
        for j in 1..=m {
            let substitution = previous[j - 1] + usize::from(a[i - 1] != b[j - 1]);
            current[j] = substitution.min(previous[j] + 1).min(current[j - 1] + 1);
        }
        previous = current;
    }
    previous[m]
}

/// Character-level Levenshtein distance with adjacent transposition counted as
/// one edit (the swap operator), i.e. Damerau-Levenshtein without repeats.
pub fn char_edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let (n, m) = (a.len(), b.len());
    let mut d = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=m {
        d[0][j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            let mut best = (d[i - 1][j] + 1).min(d[i][j - 1] + 1).min(d[i - 1][j - 1] + cost);
            if i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1] {
                best = best.min(d[i - 2][j - 2] + 1);
            }
            d[i][j] = best;
        }
    }
    d[n][m]
}
