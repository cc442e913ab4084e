#pragma once

#include <string_view>
#include <vector>

namespace memcirc::words {

using List = std::vector<std::string_view>;

// Punctuation and function words shared by all domains.
inline const List kCommon = {
    ".", ",", "(", ")", ":", ";", "-", "'", "\"", "?", "!", "=", "+", "*", "/", "<", ">",
    "[", "]", "{", "}", "|", "@", "#", "the", "a", "an", "of", "in", "on", "at", "to",
    "for", "from", "with", "by", "and", "or", "but", "who", "which", "that", "is", "was",
    "are", "were", "be", "been", "has", "had", "have", "he", "she", "they", "his", "her",
    "their", "him", "it", "its", "this", "these", "as", "also", "after", "before", "where",
    "when", "then", "best", "known", "born", "until", "during", "under", "over", "not",
    "all", "more", "new", "first", "last", "two", "three", "four", "five", "will", "can",
    "please", "we", "you", "your", "our", "i", "me", "my", "us", "here", "there", "if",
    "about", "into", "up", "out", "so", "than", "now", "only", "one", "most", "other",
    "any", "some", "what", "how", "why", "do", "does", "did", "get", "make", "see", "use",
    "like", "just", "well", "very", "no", "yes", "may", "would", "could", "should", "via"};

inline const List kFirstNames = {
    "james",   "mary",   "robert", "linda",   "michael", "susan",  "david",  "karen",
    "ahmed",   "fatima", "wei",    "mei",     "kim",     "yuna",   "carlos", "lucia",
    "ivan",    "olga",   "pierre", "claire",  "hans",    "greta",  "marco",  "giulia",
    "kenji",   "akiko",  "raj",    "priya",   "omar",    "leila",  "jan",    "eva",
    "sven",    "ingrid", "pablo",  "rosa",    "tomas",   "anna",   "felix",  "nora",
    "samuel",  "grace",  "victor", "elena",   "hugo",    "iris",   "oscar",  "maya",
    "diego",   "sofia",  "arjun",  "nadia",   "lars",    "emma",   "yusuf",  "amira",
    "chen",    "lin",    "tariq",  "zainab"};

inline const List kLastNames = {
    "smith",    "johnson", "garcia",  "muller",   "rossi",   "tanaka",   "khan",
    "singh",    "park",    "lee",     "wang",     "zhang",   "ivanov",   "petrov",
    "dubois",   "martin",  "silva",   "santos",   "nowak",   "kowalski", "jensen",
    "hansen",   "berg",    "novak",   "horvat",   "popescu", "yilmaz",   "demir",
    "hassan",   "ali",     "rahman",  "chowdhury","nguyen",  "tran",     "sato",
    "suzuki",   "kato",    "moreau",  "laurent",  "fischer", "weber",    "schulz",
    "bianchi",  "ferrari", "lopez",   "perez",    "ortiz",   "reyes",    "cruz",
    "morales",  "kumar",   "sharma",  "gupta",    "ahmadi",  "karimi",   "haddad",
    "okafor",   "mensah",  "diallo",  "keita",    "walker",  "young",    "hill",
    "scott",    "green",   "baker",   "adams",    "nelson",  "carter",   "mitchell",
    "roberts",  "turner",  "phillips","campbell", "parker",  "evans",    "edwards",
    "collins",  "stewart", "morris"};

inline const List kNationalities = {
    "american",  "british",   "canadian",  "australian", "german",    "french",
    "italian",   "spanish",   "portuguese","dutch",      "belgian",   "swiss",
    "austrian",  "swedish",   "norwegian", "danish",     "finnish",   "polish",
    "czech",     "hungarian", "romanian",  "greek",      "turkish",   "russian",
    "ukrainian", "japanese",  "chinese",   "korean",     "indian",    "pakistani",
    "egyptian",  "nigerian",  "kenyan",    "brazilian",  "argentine", "mexican",
    "chilean",   "irish",     "scottish",  "iranian"};
// Two-token nationalities, written as phrases.
inline const List kNationalityPhrases = {"south korean", "new zealand", "south african",
                                         "sri lankan", "costa rican"};

inline const List kProfessions = {
    "fencer",     "sprinter",   "swimmer",    "footballer", "cricketer", "cyclist",
    "boxer",      "wrestler",   "rower",      "golfer",     "politician","diplomat",
    "lawyer",     "judge",      "journalist", "novelist",   "poet",      "painter",
    "sculptor",   "architect",  "composer",   "pianist",    "violinist", "singer",
    "actor",      "actress",    "director",   "producer",   "physicist", "chemist",
    "biologist",  "economist",  "historian",  "philosopher","engineer",  "surgeon",
    "physician",  "teacher",    "priest",     "soldier"};
inline const List kProfessionPhrases = {
    "field hockey player", "ice hockey player", "tennis player", "chess player",
    "basketball player",   "rugby player",      "film director", "jazz musician",
    "opera singer",        "civil servant",     "army officer",  "trade unionist"};

inline const List kCities = {
    "london",  "paris",   "berlin",  "rome",     "madrid",  "lisbon",  "vienna",
    "prague",  "warsaw",  "moscow",  "kyiv",     "istanbul","cairo",   "lagos",
    "nairobi", "tokyo",   "osaka",   "seoul",    "busan",   "beijing", "shanghai",
    "delhi",   "mumbai",  "karachi", "lahore",   "tehran",  "sydney",  "melbourne",
    "toronto", "chicago", "boston",  "denver",   "lima",    "bogota",  "santiago",
    "havana",  "dublin",  "oslo",    "helsinki", "athens"};

inline const List kMonths = {"january", "february", "march",     "april",   "may",      "june",
                             "july",    "august",   "september", "october", "november", "december"};

inline const List kClubs = {"united", "rovers", "city", "athletic", "wanderers", "rangers",
                            "albion", "county", "dynamo", "olympic", "sporting", "racing"};

inline const List kAwards = {"gold medal", "silver medal", "bronze medal", "national prize",
                             "golden award", "grand prix", "world title", "state honour"};

inline const List kEvents = {"olympic games", "world championships", "asian games",
                             "commonwealth games", "european championships", "world cup"};

inline const List kSubjects = {"law",     "medicine", "history", "physics", "music",
                               "painting","economics","chemistry","literature","philosophy"};

inline const List kBioVerbs = {"played", "worked", "studied", "lived", "taught", "served",
                               "trained", "competed", "performed", "retired", "married",
                               "moved", "won", "died", "joined", "founded", "wrote",
                               "named", "grew", "represented", "returned", "elected"};

inline const List kBioNouns = {"club", "team", "school", "university", "party", "company",
                               "parliament", "league", "season", "career", "children",
                               "son", "daughter", "wife", "husband", "brother", "sister",
                               "father", "mother", "family", "album", "film", "book", "novel",
                               "series", "award", "title", "medal", "coach", "captain",
                               "member", "president", "minister", "mayor", "professor",
                               "street", "park", "bridge", "stadium", "hall", "prize"};

inline const List kBioAdjectives = {"national", "olympic", "local", "famous", "young",
                                    "senior", "junior", "former", "early", "late",
                                    "public", "royal", "central", "old", "main"};

// Code-like tokens.
inline const List kCodeKeywords = {"def", "return", "if", "else", "elif", "for", "while",
                                   "import", "class", "self", "none", "true", "false",
                                   "print", "range", "len", "break", "continue", "pass",
                                   "lambda", "yield", "try", "except", "raise", "with",
                                   "not", "is", "in", "and", "or", "==", "!=", "+=", "->"};
inline const List kCodeIdents = {
    "data",   "value", "result", "items",  "count",  "index",  "key",     "node",
    "parent", "child", "buffer", "size",   "offset", "length", "total",   "config",
    "path",   "name",  "token",  "state",  "cache",  "queue",  "stack",   "graph",
    "edge",   "row",   "col",   "matrix", "vector", "score",  "weight",  "model",
    "batch",  "step",  "loss",   "grad",   "logger", "parser", "handler", "client",
    "server", "request","response","record","field", "entry", "user",    "session"};
inline const List kCodeFuncs = {
    "load",   "save",   "parse",  "build",  "update", "reset",  "merge",  "split",
    "encode", "decode", "render", "fetch",  "send",   "read",   "write",  "close",
    "open",   "check",  "validate","compute","apply", "filter", "sort",   "find",
    "insert", "remove", "append", "flush",  "init",   "run"};
inline const List kCodeTypes = {"int", "str", "float", "list", "dict", "bool", "bytes", "tuple"};

// Email-like tokens.
inline const List kEmailWords = {
    "subject", "re", "fw", "dear",    "hi",      "hello",    "thanks",   "thank",
    "regards", "best", "cheers",  "sincerely","meeting", "call",    "schedule",
    "contract","report","deal",   "invoice", "budget",   "forecast", "review",
    "draft",   "attached","attachment","agenda","minutes","update", "proposal",
    "deadline","monday","tuesday","wednesday","thursday","friday",  "morning",
    "afternoon","tomorrow","today","week",   "office",  "conference","room",
    "team",    "trading","gas",   "power",   "pipeline","desk",     "legal",
    "counsel", "approval","signed","copy",   "forward", "reply",    "let",
    "know",    "need",   "send",  "sent",    "discuss", "confirm",  "question",
    "questions","quick", "note",  "following","below",  "above",    "ok",
    "sure",    "sorry",  "delay", "plan",    "numbers", "price",    "volume"};

// Generic web tokens.
inline const List kWebWords = {
    "home",    "about",  "contact", "login",   "sign",    "search",  "menu",
    "click",   "more",   "read",    "free",    "shipping","order",   "orders",  "cart",
    "price",   "sale",   "offer",   "deal",    "shop",    "buy",     "online",
    "news",    "blog",   "post",    "comments","share",   "privacy", "policy",
    "terms",   "service","copyright","rights", "reserved","download","video",
    "photo",   "gallery","reviews", "rating",  "stars",   "best",    "top",
    "guide",   "tips",   "recipe",  "travel",  "hotel",   "weather", "sports",
    "music",   "movies", "games",   "health",  "fitness", "diet",    "beauty",
    "fashion", "cars",   "homes",   "garden",  "pets",    "jobs",    "careers",
    "subscribe","newsletter","email","address","account","password","help",
    "faq",     "support","page",    "next",    "previous","today",   "popular",
    "latest",  "trending","featured","related","tags",    "category","archive"};

}  // namespace memcirc::words
