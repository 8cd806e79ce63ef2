#include "refjudge/report.hpp"

#include <algorithm>
#include <cstdio>

#include "refjudge/errors.hpp"
#include "refjudge/jsonl.hpp"

namespace refjudge {
namespace {

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string pad(std::string s, std::size_t width, bool left) {
  if (s.size() >= width) return s;
  const std::string fill(width - s.size(), ' ');
  return left ? s + fill : fill + s;
}

struct Row {
  std::string label;
  const AccuracyReport* rep;
};

std::vector<Row> category_rows(const CategoryBreakdown& b) {
  std::vector<Row> rows;
  for (const auto& [cat, rep] : b.per_category)
    rows.push_back({"category/" + std::string(to_string(cat)), &rep});
  return rows;
}

std::string render_text(const std::vector<Row>& rows, const CategoryBreakdown* b) {
  const std::vector<std::string> header{"label", "n", "mean", "ci_low", "ci_high", "parse_failure_rate"};
  std::vector<std::vector<std::string>> cells;
  for (const auto& r : rows)
    cells.push_back({r.label, std::to_string(r.rep->n), fixed6(r.rep->mean), fixed6(r.rep->ci_low),
                     fixed6(r.rep->ci_high), fixed6(r.rep->parse_failure_rate)});
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& row : cells) width[c] = std::max(width[c], row[c].size());
  }
  auto line = [&](const std::vector<std::string>& row) {
    std::string out;
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out += "  ";
      out += pad(row[c], width[c], c == 0);
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out + "\n";
  };
  std::string out = line(header);
  for (const auto& row : cells) out += line(row);

  if (b) {
    out += "\ncategory counts\n";
    for (auto cat : kCategories) {
      const auto it = b->counts.find(cat);
      out += "  " + pad(std::string(to_string(cat)), 22, true) +
             std::to_string(it == b->counts.end() ? 0 : it->second) + "\n";
    }
    out += "  " + pad("Unclassified", 22, true) + std::to_string(b->unclassified) + "\n";
  }
  if (!rows.empty()) {
    const auto* r = rows.front().rep;
    char buf[160];
    std::snprintf(buf, sizeof buf, "\nbootstrap: %d resamples, %.2f confidence, seed %llu\n", r->n_resamples,
                  r->confidence, static_cast<unsigned long long>(r->seed));
    out += buf;
  }
  return out;
}

std::string render_csv(const std::vector<Row>& rows) {
  std::string out = "label,n,mean,ci_low,ci_high,parse_failure_rate\r\n";
  for (const auto& r : rows) {
    out += csv_field(r.label) + "," + std::to_string(r.rep->n) + "," + fixed6(r.rep->mean) + "," +
           fixed6(r.rep->ci_low) + "," + fixed6(r.rep->ci_high) + "," + fixed6(r.rep->parse_failure_rate) +
           "\r\n";
  }
  return out;
}

}  // namespace

Classification classify_instructions(ChatBackend& backend, const TemplateStore& templates,
                                     std::span<const Instruction> instructions,
                                     const std::string& classifier_model, int parallelism) {
  std::vector<ChatRequest> reqs;
  reqs.reserve(instructions.size());
  for (const auto& instr : instructions) {
    RenderInputs in;
    in.instruction = instr.text;
    const auto prompt = render(templates, ProtocolId::CategoryClassify, in);
    ChatRequest req;
    req.model = classifier_model;
    req.system = prompt.system;
    req.user = prompt.user;
    req.temperature = 0.0;
    req.max_tokens = kJudgeMaxTokens;
    reqs.push_back(std::move(req));
  }
  const auto results = run_batch(backend, reqs, parallelism);

  Classification out;
  out.calls = reqs.size();
  for (auto cat : kCategories) out.counts[cat] = 0;
  out.counts[Category::Unclassified] = 0;
  for (std::size_t i = 0; i < instructions.size(); ++i) {
    Category cat = Category::Unclassified;
    if (const auto* resp = std::get_if<ChatResponse>(&results[i])) {
      try {
        cat = static_cast<Category>(parse_category(resp->choices.empty() ? "" : resp->choices.front()));
      } catch (const CategoryParseFailure&) {
      }
    } else {
      out.failures.push_back({instructions[i].id, std::get<BackendFailure>(results[i]).message});
    }
    out.by_id[instructions[i].id] = cat;
    ++out.counts[cat];
  }
  return out;
}

nlohmann::ordered_json to_json(const Classification& c) {
  nlohmann::ordered_json counts;
  for (auto cat : kCategories) counts[std::string(to_string(cat))] = c.counts.count(cat) ? c.counts.at(cat) : 0;
  counts["Unclassified"] = c.counts.count(Category::Unclassified) ? c.counts.at(Category::Unclassified) : 0;
  return counts;
}

std::map<std::string, Category> load_categories(const std::filesystem::path& path) {
  std::map<std::string, Category> out;
  const auto lines = jsonl::read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    try {
      const auto doc = nlohmann::json::parse(lines[i]);
      const int c = doc.at("category").get<int>();
      if (c < 0 || c > 4) throw MalformedRecord(i + 1, "category out of range");
      out[doc.at("id").get<std::string>()] = static_cast<Category>(c);
    } catch (const nlohmann::json::exception& e) {
      throw MalformedRecord(i + 1, e.what());
    }
  }
  return out;
}

void save_categories(const std::filesystem::path& path, const std::map<std::string, Category>& by_id) {
  std::vector<nlohmann::ordered_json> docs;
  for (const auto& [id, cat] : by_id) {
    nlohmann::ordered_json doc;
    doc["id"] = id;
    doc["category"] = static_cast<int>(cat);
    doc["name"] = std::string(to_string(cat));
    docs.push_back(std::move(doc));
  }
  jsonl::write(path, docs);
}

CategoryBreakdown breakdown(std::span<const EvalRecord> records, const std::map<std::string, Category>& categories,
                            const BootstrapOptions& opts) {
  CategoryBreakdown out;
  std::map<Category, std::vector<EvalRecord>> groups;
  for (auto cat : kCategories) out.counts[cat] = 0;
  for (const auto& r : records) {
    const auto it = categories.find(r.instance_id);
    if (it == categories.end() || it->second == Category::Unclassified) {
      ++out.unclassified;
      continue;
    }
    ++out.counts[it->second];
    groups[it->second].push_back(r);
  }
  for (const auto& [cat, recs] : groups) out.per_category[cat] = compute_accuracy(recs, opts);
  return out;
}

std::optional<ReportFormat> report_format_from_string(std::string_view s) {
  if (s == "text") return ReportFormat::Text;
  if (s == "csv") return ReportFormat::Csv;
  if (s == "json") return ReportFormat::Json;
  return std::nullopt;
}

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

nlohmann::ordered_json to_json(const AccuracyReport& rep) {
  nlohmann::ordered_json doc;
  doc["mean"] = rep.mean;
  doc["n"] = rep.n;
  doc["ci_low"] = rep.ci_low;
  doc["ci_high"] = rep.ci_high;
  doc["parse_failure_rate"] = rep.parse_failure_rate;
  doc["n_resamples"] = rep.n_resamples;
  doc["confidence"] = rep.confidence;
  doc["seed"] = rep.seed;
  return doc;
}

AccuracyReport accuracy_report_from_json(const nlohmann::json& doc) {
  AccuracyReport rep;
  rep.mean = doc.at("mean").get<double>();
  rep.n = doc.at("n").get<std::size_t>();
  rep.ci_low = doc.at("ci_low").get<double>();
  rep.ci_high = doc.at("ci_high").get<double>();
  rep.parse_failure_rate = doc.at("parse_failure_rate").get<double>();
  rep.n_resamples = doc.value("n_resamples", kDefaultResamples);
  rep.confidence = doc.value("confidence", kDefaultConfidence);
  rep.seed = doc.value("seed", kDefaultSeed);
  return rep;
}

ReportMap reports_from_json(const nlohmann::json& doc) {
  ReportMap out;
  for (const auto& item : doc.at("reports")) out[item.at("label").get<std::string>()] = accuracy_report_from_json(item);
  return out;
}

std::string render_report(const ReportMap& reports, const CategoryBreakdown* b, ReportFormat format) {
  if (reports.empty()) throw EmptyInput("no reports to render");
  std::vector<Row> rows;
  for (const auto& [label, rep] : reports) rows.push_back({label, &rep});
  std::vector<Row> cat_rows;
  if (b) cat_rows = category_rows(*b);

  switch (format) {
    case ReportFormat::Text: {
      auto all = rows;
      all.insert(all.end(), cat_rows.begin(), cat_rows.end());
      return render_text(all, b);
    }
    case ReportFormat::Csv: {
      auto all = rows;
      all.insert(all.end(), cat_rows.begin(), cat_rows.end());
      return render_csv(all);
    }
    case ReportFormat::Json: {
      nlohmann::ordered_json doc;
      auto arr = nlohmann::ordered_json::array();
      for (const auto& r : rows) {
        nlohmann::ordered_json item;
        item["label"] = r.label;
        item.update(to_json(*r.rep));
        arr.push_back(std::move(item));
      }
      doc["reports"] = std::move(arr);
      if (b) {
        nlohmann::ordered_json cats;
        for (auto cat : kCategories) {
          nlohmann::ordered_json item;
          item["category"] = static_cast<int>(cat);
          item["name"] = std::string(to_string(cat));
          item["count"] = b->counts.count(cat) ? b->counts.at(cat) : 0;
          if (auto it = b->per_category.find(cat); it != b->per_category.end()) item["report"] = to_json(it->second);
          cats.push_back(std::move(item));
        }
        doc["categories"] = std::move(cats);
        doc["unclassified"] = b->unclassified;
      }
      return doc.dump(2) + "\n";
    }
  }
  return "";
}

}  // namespace refjudge
