#include "hipsgen/planted.hpp"

#include <algorithm>
#include <cstdio>
#include <functional>
#include <set>

#include "hipsgen/rng.hpp"
#include "hipsgen/text.hpp"

namespace hipsgen {

IdentifierClass planted_class(Category c) {
  switch (c) {
    case Category::PERSON:
    case Category::CODE:
    case Category::DATETIME: return IdentifierClass::DIRECT;
    default: return IdentifierClass::QUASI;
  }
}

namespace {

// {P}erson {C}ode {L}oc {O}rg {D}em da{T}e {Q}uantity
const std::vector<std::string>& templates() {
  static const std::vector<std::string> t = {
      "The applicant, {P}, was born on {T} and lives in {L}.",
      "The case originated in an application no. {C} lodged with the Court on {T}.",
      "The applicant was represented by {P}, a lawyer practising in {L}.",
      "The Government were represented by their Agent, {P}, of the {O}.",
      "On {T} the {O} dismissed the claim brought by {P}.",
      "The applicant, described as {D}, was employed by the {O}.",
      "The applicant claimed {Q} in respect of pecuniary damage.",
      "The {O} awarded the applicant {Q} in compensation.",
      "The hearing took place in {L} on {T}.",
      "{P} gave evidence that the applicant had left {L} in the spring.",
      "The applicant complained that the proceedings before the {O} had been unfair.",
      "In a judgment of {T} the court found against the applicant.",
      "The witness, {P}, stated that the applicant was {D}.",
      "The tax assessment was increased by {Q} after the audit.",
      "The applicant moved to {L} and registered with the {O}.",
      "The second application, no. {C}, was joined to the first.",
      "The Court notes that the interest rate of {Q} was applied.",
      "{P} was appointed as the expert on {T}.",
      "The applicant lodged an appeal with the {O}, which was rejected.",
      "The police in {L} questioned {P} about the incident.",
  };
  return t;
}

Category slot_category(char c) {
  switch (c) {
    case 'P': return Category::PERSON;
    case 'C': return Category::CODE;
    case 'L': return Category::LOC;
    case 'O': return Category::ORG;
    case 'D': return Category::DEM;
    case 'T': return Category::DATETIME;
    case 'Q': return Category::QUANTITY;
    default: throw CorpusError(std::string("unknown template slot ") + c);
  }
}

using ValueFn = std::function<std::string(Category, RandomSource&)>;

Document build_doc(const std::string& id, RandomSource& rng, const ValueFn& value) {
  std::vector<std::size_t> order(templates().size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  const std::size_t n = 2 + rng.uniform_index(2);

  Document doc;
  doc.id = id;
  std::size_t cps = 0;
  auto append = [&](const std::string& s) {
    doc.text += s;
    cps += code_point_length(s);
  };
  for (std::size_t k = 0; k < n; ++k) {
    if (k > 0) append("\n");
    const auto& tpl = templates()[order[k]];
    for (std::size_t i = 0; i < tpl.size(); ++i) {
      if (tpl[i] == '{' && i + 2 < tpl.size() && tpl[i + 2] == '}') {
        const auto cat = slot_category(tpl[i + 1]);
        const auto v = value(cat, rng);
        const std::size_t start = cps;
        append(v);
        doc.spans.push_back({start, cps, v, cat, planted_class(cat)});
        i += 2;
      } else {
        append(std::string(1, tpl[i]));
      }
    }
  }
  return doc;
}

template <typename F>
std::vector<std::string> distinct(std::size_t n, RandomSource& rng, F make) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  while (out.size() < n) {
    auto v = make(rng);
    if (seen.insert(v).second) out.push_back(std::move(v));
  }
  return out;
}

struct PrivatePools {
  std::vector<std::string> persons, codes, dates, locs, orgs, dems, quantities;
};

PrivatePools private_pools(RandomSource& rng) {
  const std::vector<std::string> titles = {"Mr", "Ms", "Mrs"};
  const std::vector<std::string> first = {"Henrik", "Tyge",   "Nina",   "Lars",  "Mette", "Soren", "Anders", "Karin",
                                          "Jonas",  "Freja",  "Ida",    "Magnus", "Birgit", "Poul", "Helle",  "Niels"};
  const std::vector<std::string> last = {"Hasslund", "Trier",      "Holst", "Jensen",  "Nielsen",   "Larsen",   "Pedersen",
                                         "Madsen",   "Kristensen", "Olsen", "Thomsen", "Poulsen", "Rasmussen", "Sorensen"};
  const std::vector<std::string> jobs = {"fisherman", "carpenter", "teacher", "farmer", "accountant", "electrician"};
  const std::vector<std::string> heritages = {"Faroese", "Icelandic", "Greenlandic", "Polish", "Turkish"};

  PrivatePools p;
  p.persons = distinct(40, rng, [&](RandomSource& r) {
    return titles[r.uniform_index(titles.size())] + " " + first[r.uniform_index(first.size())] + " " +
           last[r.uniform_index(last.size())];
  });
  p.codes = distinct(40, rng, [](RandomSource& r) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%05d/%02d", static_cast<int>(r.uniform_int(10000, 69999)),
                  static_cast<int>(r.uniform_int(0, 19)));
    return std::string(buf);
  });
  p.dates = distinct(40, rng, [](RandomSource& r) {
    const int month = static_cast<int>(r.uniform_int(1, 12));
    const auto day = r.uniform_int(1, days_in_month(month));
    return std::to_string(day) + " " + month_names()[static_cast<std::size_t>(month - 1)] + " " +
           std::to_string(r.uniform_int(1950, 1989));
  });
  p.locs = {"Aarhus", "Odense", "Aalborg", "Esbjerg", "Randers", "Kolding", "Vejle",
            "Horsens", "Roskilde", "Herning", "Silkeborg", "Viborg", "Denmark", "Norway"};
  p.orgs = {"Danish Labour Board", "Nordic Shipping Company", "Aarhus Municipality", "Copenhagen District Court",
            "Jutland Regional Court", "Danish Tax Agency", "Baltic Ferries", "Odense University Hospital",
            "Vestergaard Dairy", "Supreme Court of Denmark"};
  p.dems = distinct(30, rng, [&](RandomSource& r) {
    if (r.uniform_index(3) == 0) return heritages[r.uniform_index(heritages.size())] + " descent";
    return std::to_string(r.uniform_int(20, 80)) + "-year-old " + jobs[r.uniform_index(jobs.size())];
  });
  p.quantities = distinct(30, rng, [](RandomSource& r) {
    if (r.uniform_index(2) == 0) {
      return std::to_string(r.uniform_int(1, 40)) + "." + std::to_string(r.uniform_int(1, 9)) + "%";
    }
    long long amount = r.uniform_int(1500, 250000);
    if (amount % 100 == 0) amount += 17;
    return format_currency(amount);
  });
  return p;
}

}  // namespace

PlantedCorpus generate_planted(const PlantedConfig& config, const FictionalPools& pools) {
  SeededRng pool_rng(derive_seed(config.seed, 100));
  const auto priv = private_pools(pool_rng);

  const ValueFn private_value = [&](Category c, RandomSource& r) -> std::string {
    const std::vector<std::string>* pool = nullptr;
    switch (c) {
      case Category::PERSON: pool = &priv.persons; break;
      case Category::CODE: pool = &priv.codes; break;
      case Category::LOC: pool = &priv.locs; break;
      case Category::ORG: pool = &priv.orgs; break;
      case Category::DEM: pool = &priv.dems; break;
      case Category::DATETIME: pool = &priv.dates; break;
      case Category::QUANTITY: pool = &priv.quantities; break;
      case Category::MISC: break;
    }
    if (!pool) throw CorpusError("no private pool for MISC");
    return (*pool)[r.uniform_index(pool->size())];
  };
  const ValueFn public_value = [&](Category c, RandomSource& r) {
    return sample_fictional({c}, pools, r).values().front();
  };

  PlantedCorpus out;
  SeededRng doc_rng(derive_seed(config.seed, 101));
  char id[32];
  for (std::size_t i = 0; i < config.train_docs; ++i) {
    std::snprintf(id, sizeof id, "train-%04zu", i);
    out.train.push_back(build_doc(id, doc_rng, private_value));
  }
  for (std::size_t i = 0; i < config.test_docs; ++i) {
    std::snprintf(id, sizeof id, "test-%04zu", i);
    out.test.push_back(build_doc(id, doc_rng, private_value));
  }
  SeededRng pub_rng(derive_seed(config.seed, 102));
  for (std::size_t i = 0; i < config.public_docs; ++i) {
    std::snprintf(id, sizeof id, "pub-%04zu", i);
    out.public_docs.push_back(build_doc(id, pub_rng, public_value));
  }
  out.loc_gazetteer = priv.locs;
  for (std::size_t i = 0; i < priv.orgs.size(); i += 2) out.org_gazetteer.push_back(priv.orgs[i]);
  return out;
}

}  // namespace hipsgen
