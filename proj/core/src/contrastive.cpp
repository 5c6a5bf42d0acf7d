// SPDX-License-Identifier: Apache-2.0
#include "hanet/contrastive.hpp"

#include <algorithm>

#include "hanet/errors.hpp"

namespace hanet {

AugMethod parse_aug_method(std::string_view name) {
  if (name == "dropout") return AugMethod::kDropout;
  if (name == "shuffle") return AugMethod::kShuffle;
  if (name == "rtr") return AugMethod::kRtr;
  throw InvalidArgument("unknown augmentation method " + std::string(name));
}

std::string_view aug_method_name(AugMethod m) {
  switch (m) {
    case AugMethod::kDropout: return "dropout";
    case AugMethod::kShuffle: return "shuffle";
    case AugMethod::kRtr: return "rtr";
  }
  return "unknown";
}

namespace {

// Contiguous blocks: trigger spans and tracked spans, everything else one token each.
std::vector<Span> units_of(const Instance& inst, std::span<const Span> tracked) {
  std::vector<Span> blocks;
  for (const Trigger& t : inst.triggers) blocks.push_back(t.span);
  for (const Span& f : tracked) {
    if (std::find(blocks.begin(), blocks.end(), f) != blocks.end()) continue;
    for (const Span& b : blocks) {
      if (b.overlaps(f)) throw InvalidArgument("augment: tracked span partially overlaps a unit");
    }
    blocks.push_back(f);
  }
  std::sort(blocks.begin(), blocks.end());
  std::vector<Span> units;
  std::size_t pos = 0;
  for (const Span& b : blocks) {
    for (; pos < b.start; ++pos) units.push_back({pos, pos + 1});
    units.push_back(b);
    pos = b.end;
  }
  for (; pos < inst.tokens.size(); ++pos) units.push_back({pos, pos + 1});
  return units;
}

AugmentedView shuffle_view(const Instance& inst, std::span<const Span> tracked, RngStream& rng) {
  std::vector<Span> units = units_of(inst, tracked);
  for (std::size_t i = units.size(); i > 1; --i) {
    std::swap(units[i - 1], units[rng.uniform_int(i)]);
  }
  AugmentedView view;
  view.instance.id = inst.id;
  std::vector<std::pair<Span, Span>> moved;
  for (const Span& u : units) {
    const std::size_t at = view.instance.tokens.size();
    view.instance.tokens.insert(view.instance.tokens.end(), inst.tokens.begin() + u.start,
                                inst.tokens.begin() + u.end);
    moved.emplace_back(u, Span{at, at + u.length()});
  }
  auto remap = [&](const Span& s) {
    for (const auto& [from, to] : moved) {
      if (from == s) return to;
    }
    throw InvalidArgument("augment: span lost during shuffle");
  };
  for (const Trigger& t : inst.triggers) view.instance.triggers.push_back({remap(t.span), t.label});
  for (const Span& f : tracked) view.tracked.push_back(remap(f));
  return view;
}

AugmentedView rtr_view(const Instance& inst, std::span<const Span> tracked, RngStream& rng,
                       std::span<const std::string> vocab, double rate) {
  AugmentedView view;
  view.instance = inst;
  view.tracked.assign(tracked.begin(), tracked.end());
  for (std::size_t k = 0; k < inst.tokens.size(); ++k) {
    const Span s{k, k + 1};
    const bool in_trigger = std::any_of(inst.triggers.begin(), inst.triggers.end(),
                                        [&](const Trigger& t) { return t.span.overlaps(s); });
    if (in_trigger) continue;
    if (rng.uniform() < rate) view.instance.tokens[k] = vocab[rng.uniform_int(vocab.size())];
  }
  return view;
}

}  // namespace

std::vector<AugmentedView> augment(const Instance& instance, std::span<const Span> tracked,
                                   AugMethod method, std::size_t m_aug, RngStream& rng,
                                   std::span<const std::string> vocab_tokens, double rtr_rate) {
  if (m_aug == 0) throw InvalidArgument("augment: m_aug must be >= 1");
  for (const Span& f : tracked) {
    if (!(f.start < f.end && f.end <= instance.tokens.size())) {
      throw InvalidArgument("augment: tracked span out of range");
    }
  }
  if (method == AugMethod::kRtr) {
    if (vocab_tokens.empty()) throw InvalidArgument("augment: rtr needs a vocabulary");
    if (!(rtr_rate >= 0.0 && rtr_rate <= 1.0)) throw InvalidArgument("augment: rtr_rate not in [0,1]");
  }
  std::vector<AugmentedView> views;
  for (std::size_t v = 0; v < m_aug; ++v) {
    AugmentedView view;
    switch (method) {
      case AugMethod::kShuffle: view = shuffle_view(instance, tracked, rng); break;
      case AugMethod::kRtr: view = rtr_view(instance, tracked, rng, vocab_tokens, rtr_rate); break;
      case AugMethod::kDropout:
        view.instance = instance;
        view.tracked.assign(tracked.begin(), tracked.end());
        break;
    }
    view.origin_id = instance.id;
    view.view_index = v + 2;
    view.method = method;
    views.push_back(std::move(view));
  }
  return views;
}

namespace {

struct Layout {
  std::size_t origins = 0;
  std::size_t views = 0;
};

template <typename Group>
Layout check_layout(const std::vector<Group>& groups, auto&& size_of, double tau) {
  if (!(tau > 0.0)) throw InvalidArgument("contrastive loss: tau must be positive");
  Layout l{groups.size(), groups.empty() ? 0 : size_of(groups.front())};
  for (const auto& g : groups) {
    if (size_of(g) != l.views) throw InvalidArgument("contrastive loss: ragged origin groups");
  }
  if (!groups.empty() && l.views < 2) {
    throw InvalidArgument("contrastive loss: each origin needs at least two views");
  }
  return l;
}

// Shared expansion over a flattened view index f = origin * views + view.
// `sim(a, b)` returns S/tau as a Var; `same(i, p)` decides label agreement for
// the trigger loss (always "different origin" semantics for the sentence loss).
template <typename Sim>
Var infonce(Tape& tape, const Layout& l, Sim&& sim, std::span<const std::size_t> labels,
            bool label_aware) {
  std::vector<Var> terms;
  for (std::size_t i = 0; i < l.origins; ++i) {
    for (std::size_t j = 0; j < l.views; ++j) {
      const std::size_t anchor = i * l.views + j;
      std::vector<Var> negatives;
      for (std::size_t p = 0; p < l.origins; ++p) {
        if (p == i || (label_aware && labels[p] == labels[i])) continue;
        for (std::size_t q = 0; q < l.views; ++q) negatives.push_back(sim(anchor, p * l.views + q));
      }
      if (negatives.empty()) continue;
      Var denom = ad::logsumexp(negatives);
      if (!label_aware) {
        for (std::size_t k = 0; k < l.views; ++k) {
          if (k == j) continue;
          terms.push_back(ad::sub(denom, sim(anchor, i * l.views + k)));
        }
      } else {
        for (std::size_t o = 0; o < l.origins; ++o) {
          if (o == i || labels[o] != labels[i]) continue;
          for (std::size_t k = 0; k < l.views; ++k) {
            if (k == j) continue;
            terms.push_back(ad::sub(denom, sim(anchor, o * l.views + k)));
          }
        }
      }
    }
  }
  if (terms.empty()) return tape.constant(Matrix(1, 1, 0.0));
  const double norm = 1.0 / (static_cast<double>(l.origins - 1) * static_cast<double>(l.views - 1));
  return ad::scale(ad::sum(terms), norm);
}

// Lazily computed, cached cosine/tau between flattened views.
class SimCache {
 public:
  SimCache(std::vector<Var> flat, double tau)
      : flat_(std::move(flat)), tau_(tau), cache_(flat_.size() * flat_.size()) {}
  Var operator()(std::size_t a, std::size_t b) {
    const std::size_t key = std::min(a, b) * flat_.size() + std::max(a, b);
    if (!cache_[key].tape) cache_[key] = ad::scale(ad::cosine(flat_[a], flat_[b]), 1.0 / tau_);
    return cache_[key];
  }

 private:
  std::vector<Var> flat_;
  double tau_;
  std::vector<Var> cache_;
};

}  // namespace

Var l_cls(Tape& tape, const std::vector<std::vector<Var>>& groups, double tau, bool* skipped) {
  const Layout l = check_layout(groups, [](const auto& g) { return g.size(); }, tau);
  if (skipped) *skipped = l.origins < 2;
  if (l.origins < 2) return tape.constant(Matrix(1, 1, 0.0));
  std::vector<Var> flat;
  for (const auto& g : groups) flat.insert(flat.end(), g.begin(), g.end());
  SimCache sim(std::move(flat), tau);
  return infonce(tape, l, sim, {}, false);
}

Var l_trig(Tape& tape, const std::vector<TriggerGroup>& groups, double tau) {
  const Layout l = check_layout(groups, [](const TriggerGroup& g) { return g.views.size(); }, tau);
  if (l.origins < 2) return tape.constant(Matrix(1, 1, 0.0));
  std::vector<Var> flat;
  std::vector<std::size_t> labels;
  for (const TriggerGroup& g : groups) {
    flat.insert(flat.end(), g.views.begin(), g.views.end());
    labels.push_back(g.label);
  }
  SimCache sim(std::move(flat), tau);
  return infonce(tape, l, sim, labels, true);
}

namespace {

std::vector<std::vector<Var>> as_constants(Tape& tape, const ViewGroups& groups) {
  std::vector<std::vector<Var>> out;
  for (const auto& g : groups) {
    std::vector<Var> vs;
    for (const auto& v : g) vs.push_back(tape.constant(Matrix::row_vector(v)));
    out.push_back(std::move(vs));
  }
  return out;
}

}  // namespace

double l_cls(const ViewGroups& groups, double tau) {
  Tape tape(false);
  return l_cls(tape, as_constants(tape, groups), tau).scalar();
}

double l_trig(const ViewGroups& groups, std::span<const std::size_t> labels, double tau) {
  if (labels.size() != groups.size()) throw InvalidArgument("l_trig: one label per origin");
  Tape tape(false);
  auto vars = as_constants(tape, groups);
  std::vector<TriggerGroup> tg;
  for (std::size_t i = 0; i < vars.size(); ++i) tg.push_back({labels[i], std::move(vars[i])});
  return l_trig(tape, tg, tau).scalar();
}

}  // namespace hanet
