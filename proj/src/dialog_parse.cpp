// Dialog DSL reader and canonical printer.
//
//   dialog <id>
//   start <state-id>
//   state <state-id>
//     prompt "<text with {var}>"
//     [reprompt "<text>"]
//     [capture <var>]                          (choice states)
//     choice "<label>" -> <target>             (repeatable)
//     | number <min>..<max> [capture <var>] -> <target>
//     | scale <min>..<max> [capture <var>] -> <target>
//     | text [capture <var>] -> <target>
//   terminal <state-id>
//   require <var> [, <var>...]

#include <algorithm>
#include <cctype>
#include <charconv>
#include <map>
#include <sstream>

#include "coachai/dialog.hpp"
#include "coachai/error.hpp"

namespace coachai::dialog {

namespace {

StateSpec make_state(std::string id) {
    StateSpec s;
    s.state_id = std::move(id);
    return s;
}

enum class Tok { ident, string, number, arrow, dots, comma, colon, end };

struct Token {
    Tok kind;
    std::string text;
    double number = 0.0;
    int column = 0;
};

bool is_ident_char(char c) { return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_'; }

std::string lower(std::string_view s) {
    std::string out(s);
    for (char& c : out)
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

class LineLexer {
public:
    LineLexer(std::string_view line, int line_no) : line_(line), line_no_(line_no) {}

    std::vector<Token> run() {
        std::vector<Token> out;
        while (true) {
            skip_space();
            if (pos_ >= line_.size() || line_[pos_] == '#')
                break;
            out.push_back(next());
        }
        out.push_back({Tok::end, "", 0.0, static_cast<int>(line_.size()) + 1});
        return out;
    }

private:
    void skip_space() {
        while (pos_ < line_.size() && (line_[pos_] == ' ' || line_[pos_] == '\t' || line_[pos_] == '\r'))
            ++pos_;
    }

    [[noreturn]] void error(std::size_t at, const std::string& msg) const {
        throw ParseError(line_no_, static_cast<int>(at) + 1, msg);
    }

    Token next() {
        const std::size_t start = pos_;
        const int col = static_cast<int>(start) + 1;
        const char c = line_[pos_];
        if (c == '"')
            return {Tok::string, read_string(), 0.0, col};
        if (c == '-' && pos_ + 1 < line_.size() && line_[pos_ + 1] == '>') {
            pos_ += 2;
            return {Tok::arrow, "->", 0.0, col};
        }
        if (c == '.' && pos_ + 1 < line_.size() && line_[pos_ + 1] == '.') {
            pos_ += 2;
            return {Tok::dots, "..", 0.0, col};
        }
        if (c == ',') {
            ++pos_;
            return {Tok::comma, ",", 0.0, col};
        }
        if (c == ':') {
            ++pos_;
            return {Tok::colon, ":", 0.0, col};
        }
        if (c == '-' || c == '+' || std::isdigit(static_cast<unsigned char>(c))) {
            std::size_t p = pos_;
            if (line_[p] == '-' || line_[p] == '+')
                ++p;
            const std::size_t digits = p;
            while (p < line_.size() && std::isdigit(static_cast<unsigned char>(line_[p])))
                ++p;
            if (p + 1 < line_.size() && line_[p] == '.' && std::isdigit(static_cast<unsigned char>(line_[p + 1]))) {
                ++p;
                while (p < line_.size() && std::isdigit(static_cast<unsigned char>(line_[p])))
                    ++p;
            }
            // A run like "12abc" is an identifier, not a number.
            if (p > digits && (p >= line_.size() || !is_ident_char(line_[p]) || line_[start] == '-' ||
                               line_[start] == '+')) {
                if (p < line_.size() && is_ident_char(line_[p]))
                    error(p, "unexpected character after number");
                std::string text(line_.substr(start, p - start));
                double value = 0.0;
                const char* first = text.data() + (text[0] == '+' ? 1 : 0);
                auto [ptr, ec] = std::from_chars(first, text.data() + text.size(), value);
                if (ec != std::errc{} || ptr != text.data() + text.size())
                    error(start, "malformed number '" + text + "'");
                pos_ = p;
                return {Tok::number, text, value, col};
            }
        }
        if (is_ident_char(c)) {
            std::size_t p = pos_;
            while (p < line_.size() && is_ident_char(line_[p]))
                ++p;
            if (p < line_.size() && std::isalpha(static_cast<unsigned char>(line_[p])))
                error(p, "identifiers use lowercase letters, digits and '_' only");
            std::string text(line_.substr(pos_, p - pos_));
            pos_ = p;
            return {Tok::ident, text, 0.0, col};
        }
        if (std::isalpha(static_cast<unsigned char>(c)))
            error(start, "identifiers use lowercase letters, digits and '_' only");
        error(start, std::string("unexpected character '") + c + "'");
    }

    std::string read_string() {
        const std::size_t open = pos_++;
        std::string out;
        while (pos_ < line_.size()) {
            const char c = line_[pos_++];
            if (c == '"')
                return out;
            if (c == '\\') {
                if (pos_ >= line_.size())
                    break;
                const char e = line_[pos_++];
                switch (e) {
                    case 'n': out += '\n'; break;
                    case 't': out += '\t'; break;
                    case '"': out += '"'; break;
                    case '\\': out += '\\'; break;
                    default: error(pos_ - 2, std::string("unknown escape '\\") + e + "'");
                }
                continue;
            }
            out += c;
        }
        error(open, "unterminated string");
    }

    std::string_view line_;
    int line_no_;
    std::size_t pos_ = 0;
};

struct Location {
    int line;
    int column;
};

class Parser {
public:
    DialogDefinition run(std::string_view source) {
        std::size_t begin = 0;
        int line_no = 0;
        while (begin <= source.size()) {
            std::size_t end = source.find('\n', begin);
            if (end == std::string_view::npos)
                end = source.size();
            ++line_no;
            line_ = line_no;
            toks_ = LineLexer(source.substr(begin, end - begin), line_no).run();
            at_ = 0;
            if (toks_.front().kind != Tok::end)
                statement();
            begin = end + 1;
        }
        return finish(line_no);
    }

private:
    [[noreturn]] void error(const Token& t, const std::string& msg) const { throw ParseError(line_, t.column, msg); }

    const Token& peek() const { return toks_[at_]; }
    const Token& take() { return toks_[at_ < toks_.size() - 1 ? at_++ : at_]; }

    const Token& expect(Tok kind, const char* what) {
        const Token& t = peek();
        if (t.kind != kind)
            error(t, std::string("expected ") + what);
        return take();
    }

    bool accept_keyword(const char* kw) {
        if (peek().kind == Tok::ident && peek().text == kw) {
            take();
            return true;
        }
        return false;
    }

    void expect_end() {
        if (peek().kind != Tok::end)
            error(peek(), "unexpected '" + peek().text + "'");
    }

    std::string ident(const char* what) { return expect(Tok::ident, what).text; }

    void statement() {
        const Token& head = expect(Tok::ident, "a keyword");
        const std::string kw = head.text;
        if (kw == "dialog") {
            if (def_.dialog_id.size())
                error(head, "duplicate 'dialog' line");
            def_.dialog_id = ident("a dialog id");
            expect_end();
        } else if (kw == "start") {
            if (entry_loc_)
                error(head, "duplicate 'start' line");
            const Token& t = expect(Tok::ident, "a state id");
            def_.entry_state = t.text;
            entry_loc_ = Location{line_, t.column};
            expect_end();
        } else if (kw == "state") {
            const Token& t = expect(Tok::ident, "a state id");
            if (index_.count(t.text))
                error(t, "duplicate state id '" + t.text + "'");
            expect_end();
            index_[t.text] = def_.states.size();
            def_.states.push_back(make_state(t.text));
            current_ = def_.states.size() - 1;
            has_prompt_.push_back(false);
        } else if (kw == "terminal") {
            const Token& t = expect(Tok::ident, "a state id");
            if (def_.terminal_states.count(t.text))
                error(t, "duplicate terminal '" + t.text + "'");
            expect_end();
            def_.terminal_states.insert(t.text);
            terminal_locs_.emplace_back(t.text, Location{line_, t.column});
            current_.reset();
        } else if (kw == "require") {
            do {
                const Token& t = expect(Tok::ident, "a variable name");
                if (!def_.required_captures.insert(t.text).second)
                    error(t, "variable '" + t.text + "' required twice");
            } while (peek().kind == Tok::comma && (take(), true));
            expect_end();
            current_.reset();
        } else if (kw == "one") {
            // "one of:" is an optional visual marker inside a state block.
            if (!current_)
                error(head, "'one of:' outside a state block");
            if (!accept_keyword("of"))
                error(peek(), "expected 'of'");
            expect(Tok::colon, "':'");
            expect_end();
        } else {
            state_line(head);
        }
    }

    StateSpec& current(const Token& at) {
        if (!current_)
            error(at, "'" + at.text + "' outside a state block");
        return def_.states[*current_];
    }

    void set_input(StateSpec& s, InputKind kind, const Token& at) {
        if (s.input != InputKind::none && !(s.input == InputKind::choice && kind == InputKind::choice))
            error(at, "state '" + s.state_id + "' already declares an input");
        s.input = kind;
    }

    std::optional<std::string> inline_capture() {
        if (accept_keyword("capture"))
            return ident("a variable name");
        return std::nullopt;
    }

    void add_target(StateSpec& s, std::string answer) {
        const Token& arrow = expect(Tok::arrow, "'->'");
        (void)arrow;
        const Token& target = expect(Tok::ident, "a target state id");
        refs_.push_back({target.text, Location{line_, target.column}});
        s.transitions.push_back({std::move(answer), target.text});
    }

    void state_line(const Token& head) {
        StateSpec& s = current(head);
        const std::string& kw = head.text;
        if (kw == "prompt") {
            if (has_prompt_[*current_])
                error(head, "duplicate prompt");
            s.prompt_template = expect(Tok::string, "a quoted prompt").text;
            has_prompt_[*current_] = true;
        } else if (kw == "reprompt") {
            if (s.reprompt_text)
                error(head, "duplicate reprompt");
            s.reprompt_text = expect(Tok::string, "a quoted reprompt").text;
        } else if (kw == "capture") {
            if (s.capture)
                error(head, "state '" + s.state_id + "' already captures '" + *s.capture + "'");
            if (s.input != InputKind::none && s.input != InputKind::choice)
                error(head, "standalone capture applies to choice states only");
            s.capture = ident("a variable name");
            standalone_capture_.insert(s.state_id);
        } else if (kw == "choice") {
            set_input(s, InputKind::choice, head);
            const Token& label = expect(Tok::string, "a quoted label");
            if (label.text.empty())
                error(label, "empty choice label");
            for (const auto& t : s.transitions)
                if (lower(t.answer) == lower(label.text))
                    error(label, "duplicate choice label \"" + label.text + "\"");
            add_target(s, label.text);
        } else if (kw == "number" || kw == "scale") {
            set_input(s, kw == "number" ? InputKind::numeric : InputKind::scale, head);
            if (standalone_capture_.count(s.state_id))
                error(head, "standalone capture applies to choice states only");
            const Token& lo = expect(Tok::number, "a minimum");
            expect(Tok::dots, "'..'");
            const Token& hi = expect(Tok::number, "a maximum");
            if (!(lo.number < hi.number))
                error(lo, "range minimum must be below its maximum");
            if (kw == "scale" && (lo.number != static_cast<long long>(lo.number) ||
                                  hi.number != static_cast<long long>(hi.number)))
                error(lo, "scale bounds must be integers");
            s.min = lo.number;
            s.max = hi.number;
            s.capture = inline_capture();
            add_target(s, "");
        } else if (kw == "text") {
            set_input(s, InputKind::free_text, head);
            if (standalone_capture_.count(s.state_id))
                error(head, "standalone capture applies to choice states only");
            s.capture = inline_capture();
            add_target(s, "");
        } else {
            error(head, "unknown keyword '" + kw + "'");
        }
        expect_end();
    }

    DialogDefinition finish(int last_line) {
        if (def_.dialog_id.empty())
            throw ParseError(last_line, 1, "missing 'dialog' line");
        if (!entry_loc_)
            throw ParseError(last_line, 1, "missing 'start' line");
        // Terminals without a state block become prompt-less states.
        for (const auto& [id, loc] : terminal_locs_) {
            if (!index_.count(id)) {
                index_[id] = def_.states.size();
                def_.states.push_back(make_state(id));
                has_prompt_.push_back(false);
            }
        }
        if (!index_.count(def_.entry_state))
            throw ParseError(entry_loc_->line, entry_loc_->column,
                             "unknown state '" + def_.entry_state + "'");
        for (const auto& [target, loc] : refs_)
            if (!index_.count(target))
                throw ParseError(loc.line, loc.column, "unknown state '" + target + "'");
        for (std::size_t i = 0; i < def_.states.size(); ++i) {
            const auto& s = def_.states[i];
            if (s.input != InputKind::none && !has_prompt_[i])
                throw ParseError(last_line, 1, "state '" + s.state_id + "' has no prompt");
        }
        return std::move(def_);
    }

    DialogDefinition def_;
    std::map<std::string, std::size_t> index_;
    std::vector<bool> has_prompt_;
    std::optional<std::size_t> current_;
    std::optional<Location> entry_loc_;
    std::vector<std::pair<std::string, Location>> terminal_locs_;
    std::vector<std::pair<std::string, Location>> refs_;
    std::set<std::string> standalone_capture_;
    std::vector<Token> toks_;
    std::size_t at_ = 0;
    int line_ = 0;
};

std::string quote(std::string_view s) {
    std::string out = "\"";
    for (char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            default: out += c;
        }
    }
    return out + "\"";
}

std::string number_text(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

}  // namespace

std::vector<std::string> StateSpec::labels() const {
    std::vector<std::string> out;
    if (input == InputKind::choice)
        for (const auto& t : transitions)
            out.push_back(t.answer);
    return out;
}

const StateSpec* DialogDefinition::find(std::string_view state_id) const {
    for (const auto& s : states)
        if (s.state_id == state_id)
            return &s;
    return nullptr;
}

DialogDefinition parse_dialog(std::string_view source) { return Parser{}.run(source); }

std::string render_dialog(const DialogDefinition& def) {
    std::ostringstream out;
    out << "dialog " << def.dialog_id << "\n";
    out << "start " << def.entry_state << "\n";
    for (const auto& s : def.states) {
        out << "\nstate " << s.state_id << "\n";
        if (!s.prompt_template.empty() || s.input != InputKind::none)
            out << "  prompt " << quote(s.prompt_template) << "\n";
        if (s.reprompt_text)
            out << "  reprompt " << quote(*s.reprompt_text) << "\n";
        const std::string capture = s.capture ? " capture " + *s.capture : "";
        switch (s.input) {
            case InputKind::none: break;
            case InputKind::choice:
                if (s.capture)
                    out << "  capture " << *s.capture << "\n";
                for (const auto& t : s.transitions)
                    out << "  choice " << quote(t.answer) << " -> " << t.target << "\n";
                break;
            case InputKind::numeric:
            case InputKind::scale:
                out << "  " << (s.input == InputKind::numeric ? "number " : "scale ") << number_text(s.min) << ".."
                    << number_text(s.max) << capture << " -> " << s.transitions.front().target << "\n";
                break;
            case InputKind::free_text:
                out << "  text" << capture << " -> " << s.transitions.front().target << "\n";
                break;
        }
    }
    out << "\n";
    for (const auto& s : def.states)
        if (def.is_terminal(s.state_id))
            out << "terminal " << s.state_id << "\n";
    if (!def.required_captures.empty()) {
        out << "require ";
        bool first = true;
        for (const auto& v : def.required_captures) {
            out << (first ? "" : ", ") << v;
            first = false;
        }
        out << "\n";
    }
    return out.str();
}

}  // namespace coachai::dialog
