#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>

#include <unistd.h>

#include "logohall/common/rng.hpp"
#include "logohall/querent/querent.hpp"

using namespace logohall;

namespace {

LogoRecord symbol(const std::string& id) {
  LogoRecord r;
  r.id = id;
  r.image_path = id + ".png";
  r.category = Category::PureSymbol;
  return r;
}

LogoRecord text_logo(const std::string& id, const std::string& gt) {
  LogoRecord r = symbol(id);
  r.category = Category::PureText;
  r.gt_text = gt;
  return r;
}

ImageBuffer tiny(std::uint8_t v) { return ImageBuffer(4, 4, 3, v); }

class CountingTransport : public Transport {
 public:
  explicit CountingTransport(std::string reply, int delay_ms = 0) : reply_(std::move(reply)), delay_ms_(delay_ms) {}
  QueryReply send(const QueryRequest&) override {
    ++calls;
    if (delay_ms_ > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms_));
    return {reply_, "t"};
  }
  bool wants_png() const override { return false; }
  std::atomic<int> calls{0};

 private:
  std::string reply_;
  int delay_ms_;
};

ModelEndpoint mock_endpoint(MockConfig cfg, int concurrency = 1) {
  ModelEndpoint e;
  e.model_id = "mock";
  e.transport = TransportKind::Mock;
  e.max_concurrency = concurrency;
  e.mock = std::move(cfg);
  return e;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("logohall_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST(NormalizeText, Examples) {
  EXPECT_EQ(normalize_text("McDonald's"), "mcdonalds");
  EXPECT_EQ(normalize_text("  Coca - Cola "), "coca cola");
  EXPECT_EQ(normalize_text("agnès b"), "agnes b");
  EXPECT_EQ(normalize_text("McDonald’s"), "mcdonalds");
  EXPECT_EQ(normalize_text("Ben & Jerry's"), "ben jerrys");
  EXPECT_EQ(normalize_text("HÄAGEN-DAZS"), "haagendazs");
  EXPECT_EQ(normalize_text("Straße"), "strasse");
  EXPECT_EQ(normalize_text("Łódź\tŒuvre"), "lodz oeuvre");
  EXPECT_EQ(normalize_text("Yahoo!"), "yahoo");
  EXPECT_EQ(normalize_text("e\xcc\x81t\xc3\xa9"), "ete");  // combining acute
  EXPECT_EQ(normalize_text(""), "");
  EXPECT_EQ(normalize_text(" \t\n "), "");
}

TEST(NormalizeText, IdempotentOnRandomStrings) {
  const std::vector<std::string> atoms{"a", "Z", " ", "\t", "'", "’", ".", ",", "!", "-", "&", "é", "Ö", "ß",
                                       "Æ", "ĳ", "×", "漢", "7", "  ", "ñ", "Ł", "\xcc\x88", "x"};
  Rng rng(17);
  for (int t = 0; t < 2000; ++t) {
    std::string s;
    const auto len = rng.uniform_index(12);
    for (std::uint64_t i = 0; i < len; ++i) s += atoms[rng.uniform_index(atoms.size())];
    const auto once = normalize_text(s);
    EXPECT_EQ(normalize_text(once), once) << s;
    EXPECT_EQ(once, std::string(detail::trim(once)));
    EXPECT_EQ(once.find("  "), std::string::npos);
  }
}

TEST(ParseStructured, ProtocolLines) {
  EXPECT_FALSE(parse_structured("TEXT: NONE").emitted_text);
  EXPECT_EQ(parse_structured("TEXT: McDonald's").emitted_text, "McDonald's");
  EXPECT_TRUE(parse_structured("TEXT: McDonald's").flags.empty());
  EXPECT_FALSE(parse_structured("text: none\nCONFIDENCE: 0.2").emitted_text);
  EXPECT_FALSE(parse_structured("TEXT:").emitted_text);

  const auto p = parse_structured("\n  TEXT:  Nike  \nCONFIDENCE: 0.83\n");
  EXPECT_EQ(p.emitted_text, "Nike");
  ASSERT_TRUE(p.confidence);
  EXPECT_DOUBLE_EQ(*p.confidence, 0.83);
  EXPECT_FALSE(parse_structured("TEXT: A\nCONFIDENCE: 1.7").confidence);
  EXPECT_FALSE(parse_structured("TEXT: A\nCONFIDENCE: high").confidence);
}

TEST(ParseStructured, FreeFormExample) {
  const auto p = parse_structured("The logo reads 'KFC'.");
  EXPECT_EQ(p.emitted_text, "KFC");
  EXPECT_EQ(p.flags, std::vector<std::string>{"unstructured_response"});
}

TEST(ParseStructured, AgreesWithHandLabels) {
  std::ifstream in(std::string(LOGOHALL_TEST_DATA) + "/freeform_responses.json");
  ASSERT_TRUE(in);
  const auto doc = nlohmann::json::parse(in);
  const auto lexicon = doc["lexicon"].get<std::vector<std::string>>();
  int n = 0;
  for (const auto& c : doc["cases"]) {
    const auto response = c["response"].get<std::string>();
    const auto parsed = parse_structured(response, lexicon);
    std::optional<std::string> label;
    if (!c["label"].is_null()) label = c["label"].get<std::string>();
    EXPECT_EQ(parsed.emitted_text, label) << response;
    EXPECT_EQ(parsed.flags, std::vector<std::string>{"unstructured_response"}) << response;
    ++n;
  }
  EXPECT_EQ(n, 50);
}

TEST(Judge, Cases) {
  auto j = judge(symbol("s"), std::string("Nike"));
  EXPECT_EQ(j.y_hat, 1);
  EXPECT_FALSE(j.exact_match);
  j = judge(symbol("s"), std::nullopt);
  EXPECT_EQ(j.y_hat, 0);
  EXPECT_FALSE(j.exact_match);
  j = judge(text_logo("t", "Google"), std::string("google"));
  EXPECT_EQ(j.y_hat, 1);
  EXPECT_EQ(j.exact_match, true);
  j = judge(text_logo("t", "Google"), std::nullopt);
  EXPECT_EQ(j.y_hat, 0);
  EXPECT_EQ(j.exact_match, false);
  j = judge(text_logo("t", "agnès b"), std::string("Agnes B."));
  EXPECT_EQ(j.exact_match, true);
}

TEST(PredictionRecord, JsonRoundTripAndInvariant) {
  PredictionRecord p;
  p.logo_id = "x";
  p.model_id = "m";
  p.prompt_id = kDefaultPromptId;
  p.raw_response = "TEXT: A";
  p.emitted_text = "A";
  p.y_hat = 1;
  p.exact_match = false;
  p.prob = 0.25;
  p.prob_source = "model";
  p.flags = {"f"};
  const auto back = prediction_from_json(prediction_to_json(p));
  EXPECT_EQ(prediction_to_json(back), prediction_to_json(p));

  p.emitted_text.reset();
  EXPECT_THROW(validate_prediction(p), InvariantError);
}

TEST(MockModel, PlantedBrandIsDeterministic) {
  MockConfig cfg;
  cfg.seed = 3;
  cfg.planted_priors = {{"apple-logo", "Apple"}};
  cfg.hallucination_rate = {{"default", 1.0}};
  cfg.catalog = mock_catalog({symbol("apple-logo"), symbol("plain")});
  Querent q(mock_endpoint(cfg), std::make_shared<MockModel>(cfg), nullptr);
  const auto a = q.predict(symbol("apple-logo"), tiny(10), kDefaultPromptId);
  EXPECT_EQ(a.raw_response, "TEXT: Apple\nCONFIDENCE: 1.0000");
  EXPECT_EQ(a.y_hat, 1);
  EXPECT_EQ(a.prob, 1.0);
  EXPECT_EQ(a.timestamp, kMockTimestamp);
  const auto b = q.predict(symbol("plain"), tiny(11), kDefaultPromptId);
  EXPECT_EQ(b.y_hat, 0);

  Querent q2(mock_endpoint(cfg), std::make_shared<MockModel>(cfg), nullptr);
  EXPECT_EQ(prediction_to_json(q2.predict(symbol("apple-logo"), tiny(10), kDefaultPromptId)), prediction_to_json(a));
}

namespace {

// Hallucination rate over `logos` pure-symbol logos and `replicates` queries each.
double mock_hall_rate(double rate, int logos, int replicates, std::uint64_t seed) {
  MockConfig cfg;
  cfg.seed = seed;
  cfg.default_prior = "Brand";
  cfg.hallucination_rate = {{"default", rate}};
  std::vector<LogoRecord> records;
  for (int i = 0; i < logos; ++i) records.push_back(symbol("sym" + std::to_string(i)));
  cfg.catalog = mock_catalog(records);
  auto mock = std::make_shared<MockModel>(cfg);
  Querent q(mock_endpoint(cfg), mock, nullptr);
  int hits = 0;
  for (int i = 0; i < logos; ++i) {
    const auto img = tiny(static_cast<std::uint8_t>(i));
    for (int r = 0; r < replicates; ++r)
      hits += q.predict(records[i], img, kDefaultPromptId, kNoPerturbation, static_cast<std::uint64_t>(r)).y_hat;
  }
  return static_cast<double>(hits) / (logos * replicates);
}

}  // namespace

TEST(MockModel, PlantedRateMatchesBinomialOracle) {
  const double p = 0.66, n = 10000;
  const double hall = mock_hall_rate(p, 200, 50, 11);
  EXPECT_NEAR(hall, p, 0.01);
  EXPECT_LE(std::abs(hall - p), 3.0 * std::sqrt(p * (1 - p) / n));
}

TEST(MockModel, NoHallFixture) {
  const double target = 0.3387;
  const double no_hall = 1.0 - mock_hall_rate(1.0 - target, 5000, 1, 7);
  EXPECT_NEAR(no_hall, target, 3.0 * std::sqrt(target * (1 - target) / 5000));
}

TEST(MockModel, TextAccuracyOneAlwaysMatches) {
  MockConfig cfg;
  cfg.text_accuracy = {{"default", 1.0}};
  std::vector<LogoRecord> records;
  for (int i = 0; i < 100; ++i) records.push_back(text_logo("t" + std::to_string(i), "Brand Nº" + std::to_string(i)));
  cfg.catalog = mock_catalog(records);
  Querent q(mock_endpoint(cfg), std::make_shared<MockModel>(cfg), nullptr);
  for (const auto& r : records) EXPECT_EQ(q.predict(r, tiny(1), kDefaultPromptId).exact_match, true);
}

TEST(MockModel, TriggerSpecificRates) {
  MockConfig cfg;
  cfg.text_accuracy = {{"default", 1.0}, {"Occlusion", 0.0}};
  const auto rec = text_logo("t", "Google");
  cfg.catalog = mock_catalog({rec});
  Querent q(mock_endpoint(cfg), std::make_shared<MockModel>(cfg), nullptr);
  EXPECT_EQ(q.predict(rec, tiny(1), kDefaultPromptId, "Occlusion").exact_match, false);
  EXPECT_EQ(q.predict(rec, tiny(1), kDefaultPromptId, "Blur").exact_match, true);
}

TEST(MockModel, FreeFormGoesThroughHeuristic) {
  MockConfig cfg;
  cfg.free_form = true;
  cfg.default_prior = "Nike";
  cfg.hallucination_rate = {{"default", 1.0}};
  cfg.catalog = mock_catalog({symbol("s")});
  Querent q(mock_endpoint(cfg), std::make_shared<MockModel>(cfg), nullptr);
  const auto p = q.predict(symbol("s"), tiny(1), kDefaultPromptId);
  EXPECT_EQ(p.emitted_text, "Nike");
  EXPECT_EQ(p.flags, std::vector<std::string>{"unstructured_response"});
  EXPECT_FALSE(p.prob);
}

TEST(Querent, CacheHitMakesNoNetworkCall) {
  auto transport = std::make_shared<CountingTransport>("TEXT: NONE");
  ModelEndpoint ep;
  ep.model_id = "m";
  Querent q(ep, transport, nullptr);
  const auto first = q.query(tiny(5), kDefaultPromptId);
  EXPECT_FALSE(first.from_cache);
  EXPECT_EQ(q.network_calls(), 1u);
  const auto second = q.query(tiny(5), kDefaultPromptId);
  EXPECT_TRUE(second.from_cache);
  EXPECT_EQ(second.cache_key, first.cache_key);
  EXPECT_EQ(q.network_calls(), 1u);
  EXPECT_EQ(transport->calls.load(), 1);

  q.query(tiny(6), kDefaultPromptId);
  EXPECT_EQ(q.network_calls(), 2u);
}

TEST(Querent, CacheKeySeparatesInputs) {
  const auto d1 = image_digest(tiny(1)), d2 = image_digest(tiny(2));
  EXPECT_NE(d1, d2);
  EXPECT_NE(image_digest(ImageBuffer(2, 8, 3, std::uint8_t{1})), image_digest(ImageBuffer(8, 2, 3, std::uint8_t{1})));
  DecodingParams dp;
  const auto k = make_cache_key(d1, "p", "m", dp);
  EXPECT_NE(k, make_cache_key(d2, "p", "m", dp));
  EXPECT_NE(k, make_cache_key(d1, "q", "m", dp));
  EXPECT_NE(k, make_cache_key(d1, "p", "n", dp));
  dp.max_tokens = 65;
  EXPECT_NE(k, make_cache_key(d1, "p", "m", dp));
}

TEST(Querent, PersistentCacheSurvivesRestart) {
  const auto dir = temp_dir("cache");
  const auto path = dir / "responses.jsonl";
  ModelEndpoint ep;
  ep.model_id = "m";
  {
    auto t = std::make_shared<CountingTransport>("TEXT: A");
    Querent q(ep, t, std::make_shared<ResponseCache>(path));
    q.query(tiny(9), kDefaultPromptId);
    EXPECT_EQ(t->calls.load(), 1);
  }
  auto t = std::make_shared<CountingTransport>("TEXT: B");
  Querent q(ep, t, std::make_shared<ResponseCache>(path));
  const auto r = q.query(tiny(9), kDefaultPromptId);
  EXPECT_EQ(r.response, "TEXT: A");
  EXPECT_EQ(t->calls.load(), 0);
  std::filesystem::remove_all(dir);
}

TEST(Querent, ConcurrentIdenticalQueriesShareOneCall) {
  auto transport = std::make_shared<CountingTransport>("TEXT: X", 50);
  ModelEndpoint ep;
  ep.model_id = "m";
  ep.max_concurrency = 8;
  Querent q(ep, transport, nullptr);
  const auto rec = symbol("s");
  std::vector<PredictionJob> jobs(16, PredictionJob{&rec, [] { return tiny(3); }});
  const auto out = q.predict_batch(jobs, kDefaultPromptId);
  EXPECT_EQ(transport->calls.load(), 1);
  for (const auto& p : out) EXPECT_EQ(p.emitted_text, "X");
}

TEST(Querent, BatchPreservesOrder) {
  MockConfig cfg;
  std::vector<LogoRecord> records;
  for (int i = 0; i < 40; ++i) records.push_back(text_logo("t" + std::to_string(i), "W" + std::to_string(i)));
  cfg.catalog = mock_catalog(records);
  Querent q(mock_endpoint(cfg, 4), std::make_shared<MockModel>(cfg), nullptr);
  std::vector<PredictionJob> jobs;
  for (int i = 0; i < 40; ++i) jobs.push_back({&records[i], [i] { return tiny(static_cast<std::uint8_t>(i)); }});
  const auto out = q.predict_batch(jobs, kDefaultPromptId);
  for (int i = 0; i < 40; ++i) EXPECT_EQ(out[i].emitted_text, "W" + std::to_string(i));
}

TEST(Querent, UnreachableHostFailsAfterThreeAttempts) {
  ModelEndpoint ep;
  ep.model_id = "remote";
  ep.transport = TransportKind::HttpChatWithImage;
  ep.base_url = "http://127.0.0.1:1";
  ep.timeout_s = 2;
  ep.retry = {3, 1, 2.0};
  Querent q(ep, make_transport(ep), nullptr);
  try {
    q.query(tiny(1), kDefaultPromptId);
    FAIL() << "expected failure";
  } catch (const QueryFailure& e) {
    EXPECT_EQ(e.kind(), FailureKind::Transient);
    ASSERT_EQ(e.attempts().size(), 3u);
    for (int i = 0; i < 3; ++i) EXPECT_EQ(e.attempts()[i].attempt, i + 1);
    EXPECT_EQ(e.code(), ExitCode::Upstream);
  }
  EXPECT_EQ(q.network_calls(), 3u);
}

namespace {

struct LocalServer {
  httplib::Server server;
  int port = 0;
  std::thread thread;
  LocalServer() {
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~LocalServer() {
    server.stop();
    thread.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port); }
};

ModelEndpoint http_endpoint(const std::string& url) {
  ModelEndpoint ep;
  ep.model_id = "local";
  ep.remote_model = "vlm-13b";
  ep.transport = TransportKind::HttpChatWithImage;
  ep.base_url = url;
  ep.auth_env = "LOGOHALL_TEST_TOKEN";
  ep.timeout_s = 5;
  ep.retry = {3, 1, 1.0};
  return ep;
}

}  // namespace

TEST(HttpTransport, SendsImageAndParsesReply) {
  ::setenv("LOGOHALL_TEST_TOKEN", "secret", 1);
  LocalServer srv;
  std::atomic<int> hits{0};
  nlohmann::json seen;
  std::string auth;
  srv.server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    if (hits++ == 0) {
      res.status = 503;
      return;
    }
    seen = nlohmann::json::parse(req.body);
    auth = req.get_header_value("Authorization");
    res.set_content(R"({"choices":[{"message":{"role":"assistant","content":"TEXT: Nike\nCONFIDENCE: 0.7"}}]})",
                    "application/json");
  });
  const auto ep = http_endpoint(srv.url());
  Querent q(ep, make_transport(ep), nullptr);
  const auto r = q.query(tiny(1), kDefaultPromptId);
  EXPECT_EQ(r.response, "TEXT: Nike\nCONFIDENCE: 0.7");
  ASSERT_EQ(r.attempts.size(), 2u);
  EXPECT_EQ(r.attempts[0].status, 503);
  EXPECT_EQ(auth, "Bearer secret");
  EXPECT_EQ(seen["model"], "vlm-13b");
  EXPECT_EQ(seen["temperature"], 0.0);
  const auto url = seen["messages"][0]["content"][1]["image_url"]["url"].get<std::string>();
  const auto expected = "data:image/png;base64," + base64_encode(encode_png(tiny(1)));
  EXPECT_EQ(url, expected);
  EXPECT_EQ(seen["messages"][0]["content"][0]["text"], prompt_text(kDefaultPromptId));
}

TEST(HttpTransport, AuthFailureIsNotRetried) {
  ::setenv("LOGOHALL_TEST_TOKEN", "bad", 1);
  LocalServer srv;
  std::atomic<int> hits{0};
  srv.server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    ++hits;
    res.status = 401;
  });
  const auto ep = http_endpoint(srv.url());
  Querent q(ep, make_transport(ep), nullptr);
  try {
    q.query(tiny(1), kDefaultPromptId);
    FAIL();
  } catch (const QueryFailure& e) {
    EXPECT_EQ(e.kind(), FailureKind::Auth);
    EXPECT_EQ(e.attempts().size(), 1u);
  }
  EXPECT_EQ(hits.load(), 1);
}

TEST(HttpTransport, MalformedAndPermanentErrors) {
  ::setenv("LOGOHALL_TEST_TOKEN", "x", 1);
  LocalServer srv;
  srv.server.Post("/v1/chat/completions",
                  [](const httplib::Request&, httplib::Response& res) { res.set_content("not json", "text/plain"); });
  srv.server.Post("/missing", [](const httplib::Request&, httplib::Response& res) { res.status = 404; });
  auto ep = http_endpoint(srv.url());
  Querent q(ep, make_transport(ep), nullptr);
  try {
    q.query(tiny(1), kDefaultPromptId);
    FAIL();
  } catch (const QueryFailure& e) {
    EXPECT_EQ(e.kind(), FailureKind::Malformed);
    EXPECT_EQ(e.attempts().size(), 1u);
  }
  ep.path = "/missing";
  Querent q2(ep, make_transport(ep), nullptr);
  try {
    q2.query(tiny(1), kDefaultPromptId);
    FAIL();
  } catch (const QueryFailure& e) {
    EXPECT_EQ(e.kind(), FailureKind::Permanent);
  }
  EXPECT_EQ(chat_response_text(R"({"choices":[{"message":{"content":[{"type":"text","text":"TEXT: "},{"type":"text","text":"A"}]}}]})"),
            "TEXT: A");
}

TEST(HttpTransport, MissingTokenIsConfigError) {
  ::unsetenv("LOGOHALL_TEST_TOKEN_ABSENT");
  auto ep = http_endpoint("http://127.0.0.1:1");
  ep.auth_env = "LOGOHALL_TEST_TOKEN_ABSENT";
  EXPECT_THROW(make_transport(ep), ConfigError);
}

TEST(Endpoints, YamlConfig) {
  const auto eps = parse_endpoints(R"(
endpoints:
  - model_id: mock-llava
    transport: mock
    max_concurrency: 4
    mock:
      seed: 9
      default_prior: Brand
      planted_priors: {a1: Apple}
      hallucination_rate: {default: 0.6613, Occlusion: 0.9}
      text_accuracy: 0.98
  - model_id: gpt
    transport: http
    base_url: https://api.example.com
    remote_model: gpt-4o
    retry: {max_attempts: 5, backoff_ms: 10}
)");
  ASSERT_EQ(eps.size(), 2u);
  EXPECT_EQ(eps[0].max_concurrency, 4);
  EXPECT_EQ(eps[0].mock.seed, 9u);
  EXPECT_EQ(eps[0].mock.planted_priors.at("a1"), "Apple");
  EXPECT_DOUBLE_EQ(eps[0].mock.hallucination_rate.at("Occlusion"), 0.9);
  EXPECT_DOUBLE_EQ(eps[0].mock.text_accuracy.at("default"), 0.98);
  EXPECT_EQ(eps[1].transport, TransportKind::HttpChatWithImage);
  EXPECT_EQ(eps[1].retry.max_attempts, 5);

  EXPECT_THROW(parse_endpoints("endpoints:\n  - model_id: a\n    max_concurrency: 0\n"), ConfigError);
  EXPECT_THROW(parse_endpoints("endpoints:\n  - model_id: a\n  - model_id: a\n"), ConfigError);
  EXPECT_THROW(parse_endpoints("endpoints:\n  - model_id: a\n    transport: carrier-pigeon\n"), ConfigError);
  EXPECT_THROW(parse_endpoints("nothing: here\n"), ConfigError);
  EXPECT_THROW(parse_endpoints("endpoints: [\n"), ConfigError);
}
