#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "coachai/api.hpp"
#include "coachai/classifier.hpp"
#include "coachai/dialog.hpp"
#include "coachai/error.hpp"
#include "coachai/gateway.hpp"
#include "coachai/instruments.hpp"
#include "coachai/log.hpp"
#include "coachai/reports.hpp"
#include "coachai/service.hpp"
#include "coachai/simulation.hpp"

namespace fs = std::filesystem;
using namespace coachai;

namespace {

constexpr int kOk = 0;
constexpr int kValidationFailure = 1;
constexpr int kRuntimeError = 2;

// Thrown for inputs that parse but fail a check; maps to exit code 1.
struct ValidationFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::atomic<bool> g_stop{false};
api::HttpServer* g_server = nullptr;

void on_signal(int) {
    g_stop = true;
    if (g_server)
        g_server->stop();
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorKind::not_found, "cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out)
        throw Error(ErrorKind::invalid_state, "cannot write " + path.string());
}

std::optional<std::string> env(const char* name) {
    const char* v = std::getenv(name);
    if (!v || !*v)
        return std::nullopt;
    return std::string(v);
}

void print_evaluation(const classifier::Evaluation& e, const std::string& what) {
    std::cout << what << " accuracy: " << reports::format_number(e.accuracy) << " (" << e.rows << " rows)\n";
    std::cout << "confusion (rows actual, columns predicted):";
    for (auto label : classifier::kLabels)
        std::cout << ' ' << name_of(label);
    std::cout << '\n';
    for (std::size_t a = 0; a < classifier::kClassCount; ++a) {
        std::cout << "  " << name_of(classifier::kLabels[a]);
        for (std::size_t p = 0; p < classifier::kClassCount; ++p)
            std::cout << ' ' << e.confusion[a][p];
        std::cout << '\n';
    }
}

// ---- serve

struct ServeArgs {
    std::string addr = "127.0.0.1:8080";
    std::optional<std::string> data_dir;
    std::optional<std::string> tick_step;
    std::optional<std::string> until;
    std::optional<std::string> start;
    double tick_seconds = 1.0;
};

int serve(const ServeArgs& args) {
    service::ServiceOptions options;
    if (args.data_dir)
        options.data_dir = *args.data_dir;

    std::shared_ptr<gateway::Channel> channel;
    if (auto url = gateway::base_url_from_environment()) {
        gateway::WebhookOptions w;
        w.base_url = *url;
        w.poll_updates = env("COACHAI_BOT_POLL").has_value();
        channel = std::make_shared<gateway::WebhookChannel>(w);
    } else {
        channel = std::make_shared<gateway::ConsoleChannel>();
        log::warn("no COACHAI_BOT_TOKEN or COACHAI_BOT_BASE_URL; messages go to the in-process console channel");
    }

    const bool simulated = args.tick_step || args.until || args.start;
    Duration step = std::chrono::minutes{15};
    if (args.tick_step)
        step = parse_duration(*args.tick_step);
    if (step <= Duration::zero())
        throw ValidationFailure("--tick-step must be positive");
    std::optional<Timestamp> until;
    if (args.until)
        until = parse_timestamp(*args.until);
    Timestamp start = std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now());
    if (args.start)
        start = parse_timestamp(*args.start);
    Clock clock = simulated ? Clock::simulated(start) : Clock::real();

    service::CoachService svc(options, channel, clock);
    api::Router router(svc, env("COACHAI_API_TOKEN"));
    api::HttpServer server(router);

    const auto colon = args.addr.rfind(':');
    if (colon == std::string::npos)
        throw ValidationFailure("address must be host:port, got " + args.addr);
    const int port = server.bind(args.addr.substr(0, colon), std::stoi(args.addr.substr(colon + 1)));
    std::cout << "listening on " << args.addr.substr(0, colon) << ":" << port << std::endl;

    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::thread http([&] { server.listen(); });

    const auto pause = std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::duration<double>(args.tick_seconds));
    while (!g_stop) {
        try {
            if (simulated) {
                const Timestamp next = svc.now() + step;
                if (!until || next <= *until)
                    svc.tick(next);
            } else {
                svc.tick();
            }
        } catch (const std::exception& e) {
            log::error(std::string("tick failed: ") + e.what());
        }
        std::this_thread::sleep_for(pause);
    }
    server.stop();
    http.join();
    g_server = nullptr;
    svc.snapshot();
    return kOk;
}

// ---- dialogs, classifier, scoring

int validate_dialog(const std::string& file) {
    const auto def = dialog::parse_dialog(read_file(file));
    const auto defects = dialog::validate(def);
    // Context values the service supplies when it starts a session.
    const auto warnings = dialog::lint_placeholders(def, {"name", "activity_title", "activity_id", "assignment_id",
                                                          "occurrence_date", "instrument", "template_id", "week"});
    int errors = 0;
    for (const auto& d : defects) {
        std::cout << d.describe() << '\n';
        errors += d.severity == dialog::Severity::error ? 1 : 0;
    }
    for (const auto& d : warnings)
        std::cout << d.describe() << '\n';
    std::cout << errors << " defects\n";
    return errors == 0 ? kOk : kValidationFailure;
}

int gen_dataset(std::size_t rows, std::size_t features, std::uint64_t seed, const std::optional<std::string>& out) {
    if (features != classifier::kFeatureCount)
        throw ValidationFailure("the intake profile has " + std::to_string(classifier::kFeatureCount) +
                                " features, not " + std::to_string(features));
    if (rows < 2 * classifier::kClassCount)
        throw ValidationFailure("need at least two rows per class");
    const auto csv = classifier::to_csv(classifier::generate_dataset({rows, seed}));
    if (out)
        write_file(*out, csv);
    else
        std::cout << csv;
    return kOk;
}

int train_classifier(const std::string& data, std::uint64_t seed, const std::string& out, double test_fraction,
                     double C, int epochs) {
    const auto dataset = classifier::parse_csv(read_file(data));
    classifier::Hyperparams params(seed);
    params.C = C;
    params.epochs = epochs;
    auto [train, test] = test_fraction > 0 ? classifier::split(dataset, test_fraction, seed)
                                           : std::pair{dataset, classifier::LabeledDataset{}};
    const auto model = classifier::train(train, params);
    write_file(out, Json(model).dump(2) + "\n");
    print_evaluation(classifier::evaluate(model, train), "train");
    if (!test.rows.empty())
        print_evaluation(classifier::evaluate(model, test), "test");
    return kOk;
}

int eval_classifier(const std::string& model_file, const std::string& data) {
    const auto model = Json::parse(read_file(model_file)).get<classifier::SvmModel>();
    print_evaluation(classifier::evaluate(model, classifier::parse_csv(read_file(data))), "eval");
    return kOk;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cell += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cell += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            cells.push_back(cell);
            cell.clear();
        } else if (c != '\r') {
            cell += c;
        }
    }
    cells.push_back(cell);
    return cells;
}

// Wide CSV: one row per response, one column per item id. Columns that are
// not items (respondent, week, ...) are carried through as identifiers.
int score(const std::string& template_file, const std::string& responses_file, bool lenient) {
    const auto tpl = instruments::parse_template(read_file(template_file));
    std::istringstream in(read_file(responses_file));
    std::string line;
    if (!std::getline(in, line))
        throw ValidationFailure("empty responses file");
    const auto header = split_csv_line(line);
    std::vector<bool> is_item;
    for (const auto& h : header)
        is_item.push_back(tpl.find(h) != nullptr);

    reports::Table table;
    table.title = "scores for " + tpl.template_id;
    for (std::size_t c = 0; c < header.size(); ++c)
        if (!is_item[c])
            table.columns.push_back(header[c]);
    for (const auto& dim : tpl.dimensions)
        table.columns.push_back(dim);
    table.columns.push_back("total");

    int line_no = 1;
    int failures = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r")
            continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size())
            throw ParseError(line_no, 1,
                             "expected " + std::to_string(header.size()) + " cells, got " + std::to_string(cells.size()));
        instruments::QuestionnaireResponse r;
        r.template_id = tpl.template_id;
        std::vector<std::string> row;
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (!is_item[c]) {
                row.push_back(cells[c]);
                continue;
            }
            if (cells[c].empty())
                continue;
            const auto* item = tpl.find(header[c]);
            if (auto it = item->answer_scores.find(cells[c]); it != item->answer_scores.end()) {
                r.answers[header[c]] = it->second;
                continue;
            }
            try {
                std::size_t used = 0;
                r.answers[header[c]] = std::stod(cells[c], &used);
                if (used != cells[c].size())
                    throw std::invalid_argument("trailing text");
            } catch (const std::logic_error&) {
                throw ParseError(line_no, static_cast<int>(c) + 1, "not a number: " + cells[c]);
            }
        }
        try {
            const auto s = instruments::score_response(
                tpl, r, lenient ? instruments::Completeness::lenient : instruments::Completeness::strict);
            for (const auto& dim : tpl.dimensions) {
                auto it = s.per_dimension.find(dim);
                row.push_back(it == s.per_dimension.end() ? "n/a" : reports::format_number(it->second));
            }
            row.push_back(reports::format_number(s.total));
        } catch (const Error& e) {
            std::cerr << "line " << line_no << ": " << e.what() << '\n';
            ++failures;
            continue;
        }
        table.rows.push_back(std::move(row));
    }
    std::cout << table.to_csv();
    return failures == 0 ? kOk : kValidationFailure;
}

// ---- studies

int simulate(const sim::StudyConfig& config, const std::string& out, bool quiet) {
    const auto result = sim::simulate_study(config, fs::path(out));
    sim::write_bundle(result, out);
    if (!quiet) {
        std::cout << result.files.at("adherence_split.txt") << '\n';
        std::cout << "bundle written to " << out << '\n';
    }
    return kOk;
}

int report(const std::string& run_dir) {
    const fs::path dir(run_dir);
    if (!fs::exists(dir / "store"))
        throw ValidationFailure(run_dir + " has no store directory; is it a simulation bundle?");
    Date start = make_date(2024, 1, 1);
    if (fs::exists(dir / "manifest.json")) {
        const auto m = Json::parse(read_file(dir / "manifest.json"));
        if (m.contains("start"))
            start = date_of(m.at("start").get<Timestamp>());
    }
    service::ServiceOptions options;
    options.data_dir = dir / "store";
    options.sync = false;
    service::CoachService svc(options, std::make_shared<gateway::ConsoleChannel>(), Clock::simulated(Timestamp{start}));
    const auto files = sim::render_reports(svc.study_data());
    for (const auto& [name, text] : files)
        write_file(dir / name, text);
    for (const auto& name : {"adherence.txt", "adherence_split.txt", "descriptives.txt", "instrument_TAM.txt",
                             "instrument_AttrakDiff.txt", "instrument_HAPA.txt", "hapa_stages.txt", "preferences.txt"})
        std::cout << files.at(name) << '\n';
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Coaching chatbot backend: server, dialogs, classifier and study simulator"};
    app.require_subcommand(1);
    std::string level = "warn";
    app.add_option("--log-level", level, "debug, info, warn, error or off")->check(
        CLI::IsMember({"debug", "info", "warn", "error", "off"}));

    ServeArgs serve_args;
    if (auto a = env("COACHAI_ADDR"))
        serve_args.addr = *a;
    serve_args.data_dir = env("COACHAI_DATA_DIR");
    auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP API and scheduler");
    serve_cmd->add_option("--addr", serve_args.addr, "host:port (env COACHAI_ADDR)");
    serve_cmd->add_option("--data-dir", serve_args.data_dir, "store directory (env COACHAI_DATA_DIR)");
    serve_cmd->add_option("--tick-step", serve_args.tick_step, "simulated clock advance per tick, e.g. 15m");
    serve_cmd->add_option("--until", serve_args.until, "stop advancing the simulated clock at this instant");
    serve_cmd->add_option("--start", serve_args.start, "simulated clock start (ISO-8601)");
    serve_cmd->add_option("--tick-interval", serve_args.tick_seconds, "wall seconds between ticks")
        ->check(CLI::PositiveNumber);

    std::string dialog_file;
    auto* validate_cmd = app.add_subcommand("validate-dialog", "Parse and check a dialog definition");
    validate_cmd->add_option("file", dialog_file)->required();

    std::size_t rows = 375;
    std::size_t features = classifier::kFeatureCount;
    std::uint64_t seed = 1;
    std::optional<std::string> out_file;
    auto* gen_cmd = app.add_subcommand("gen-dataset", "Write a synthetic labeled intake dataset as CSV");
    gen_cmd->add_option("--rows", rows);
    gen_cmd->add_option("--features", features);
    gen_cmd->add_option("--seed", seed);
    gen_cmd->add_option("--out", out_file, "output file (default stdout)");

    std::string data_file;
    std::string model_file;
    double test_fraction = 0.2;
    double C = 1.0;
    int epochs = 200;
    auto* train_cmd = app.add_subcommand("train-classifier", "Train the activity-class SVM");
    train_cmd->add_option("--data", data_file)->required();
    train_cmd->add_option("--seed", seed);
    train_cmd->add_option("--out", model_file)->required();
    train_cmd->add_option("--test-fraction", test_fraction)->check(CLI::Range(0.0, 0.9));
    train_cmd->add_option("--C", C)->check(CLI::PositiveNumber);
    train_cmd->add_option("--epochs", epochs)->check(CLI::PositiveNumber);

    auto* eval_cmd = app.add_subcommand("eval-classifier", "Evaluate a trained model on a labeled CSV");
    eval_cmd->add_option("--model", model_file)->required();
    eval_cmd->add_option("--data", data_file)->required();

    sim::StudyConfig study;
    std::string out_dir = "run";
    bool quiet = false;
    double probability = -1;
    auto* sim_cmd = app.add_subcommand("simulate", "Run a simulated study and write the report bundle");
    sim_cmd->add_option("--participants", study.participants);
    sim_cmd->add_option("--weeks", study.weeks);
    sim_cmd->add_option("--seed", study.seed);
    sim_cmd->add_option("--completion-probability", probability, "same probability for every participant");
    sim_cmd->add_option("--run-id", study.run_id);
    sim_cmd->add_option("--out", out_dir);
    sim_cmd->add_flag("--quiet", quiet);

    std::string run_dir;
    auto* report_cmd = app.add_subcommand("report", "Re-emit the statistics tables of a simulation bundle");
    report_cmd->add_option("--run", run_dir)->required();

    std::string template_file;
    std::string responses_file;
    bool lenient = false;
    auto* score_cmd = app.add_subcommand("score", "Score questionnaire responses against a template");
    score_cmd->add_option("--template", template_file)->required();
    score_cmd->add_option("--responses", responses_file)->required();
    score_cmd->add_flag("--lenient", lenient, "average answered items only");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kValidationFailure;
    }
    static const std::map<std::string, log::Level> kLevels{{"debug", log::Level::debug},
                                                           {"info", log::Level::info},
                                                           {"warn", log::Level::warn},
                                                           {"error", log::Level::error},
                                                           {"off", log::Level::off}};
    log::set_level(kLevels.at(level));

    try {
        if (*serve_cmd)
            return serve(serve_args);
        if (*validate_cmd)
            return validate_dialog(dialog_file);
        if (*gen_cmd)
            return gen_dataset(rows, features, seed, out_file);
        if (*train_cmd)
            return train_classifier(data_file, seed, model_file, test_fraction, C, epochs);
        if (*eval_cmd)
            return eval_classifier(model_file, data_file);
        if (*sim_cmd) {
            if (probability >= 0 || sim_cmd->count("--completion-probability"))
                study.completion_probability = probability;
            if (study.run_id == "run")
                study.run_id = "seed" + std::to_string(study.seed);
            return simulate(study, out_dir, quiet);
        }
        if (*report_cmd)
            return report(run_dir);
        if (*score_cmd)
            return score(template_file, responses_file, lenient);
    } catch (const ValidationFailure& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kValidationFailure;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kValidationFailure;
    } catch (const Error& e) {
        std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
        const bool validation = e.kind() == ErrorKind::domain || e.kind() == ErrorKind::invalid_plan ||
                                e.kind() == ErrorKind::parse || e.kind() == ErrorKind::missing_feature ||
                                e.kind() == ErrorKind::coercion || e.kind() == ErrorKind::instrument;
        return validation ? kValidationFailure : kRuntimeError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntimeError;
    }
    return kOk;
}
