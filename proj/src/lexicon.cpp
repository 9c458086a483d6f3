#include "halluscope/chair.hpp"

namespace halluscope {

// Starter lexicon: the 80 COCO object categories with common synonym surface
// forms. Plural variants are generated by the Lexicon constructor.
Lexicon Lexicon::coco_default() {
    static const std::map<std::string, std::vector<std::string>> entries = {
        {"person", {"man", "woman", "people", "child", "kid", "boy", "girl", "guy", "lady",
                    "player", "rider", "skier", "snowboarder", "surfer", "pedestrian"}},
        {"bicycle", {"bike"}},
        {"car", {"automobile"}},
        {"motorcycle", {"motorbike"}},
        {"airplane", {"plane", "aircraft", "jet"}},
        {"bus", {}},
        {"train", {}},
        {"truck", {}},
        {"boat", {}},
        {"traffic light", {"traffic signal", "stoplight"}},
        {"fire hydrant", {"hydrant"}},
        {"stop sign", {}},
        {"parking meter", {}},
        {"bench", {}},
        {"bird", {}},
        {"cat", {"kitten"}},
        {"dog", {"puppy"}},
        {"horse", {"pony"}},
        {"sheep", {"lamb"}},
        {"cow", {"cattle"}},
        {"elephant", {}},
        {"bear", {}},
        {"zebra", {}},
        {"giraffe", {}},
        {"backpack", {"knapsack"}},
        {"umbrella", {}},
        {"handbag", {"purse"}},
        {"tie", {"necktie"}},
        {"suitcase", {"luggage"}},
        {"frisbee", {}},
        {"skis", {"ski"}},
        {"snowboard", {}},
        {"sports ball", {"ball"}},
        {"kite", {}},
        {"baseball bat", {"bat"}},
        {"baseball glove", {"glove", "mitt"}},
        {"skateboard", {}},
        {"surfboard", {}},
        {"tennis racket", {"racket", "racquet"}},
        {"bottle", {}},
        {"wine glass", {"wineglass"}},
        {"cup", {"mug"}},
        {"fork", {}},
        {"knife", {}},
        {"spoon", {}},
        {"bowl", {}},
        {"banana", {}},
        {"apple", {}},
        {"sandwich", {}},
        {"orange", {}},
        {"broccoli", {}},
        {"carrot", {}},
        {"hot dog", {"hotdog"}},
        {"pizza", {}},
        {"donut", {"doughnut"}},
        {"cake", {}},
        {"chair", {}},
        {"couch", {"sofa"}},
        {"potted plant", {"plant", "houseplant"}},
        {"bed", {}},
        {"dining table", {"table"}},
        {"toilet", {}},
        {"tv", {"television"}},
        {"laptop", {}},
        {"mouse", {"mice"}},
        {"remote", {"remote control"}},
        {"keyboard", {}},
        {"cell phone", {"phone", "mobile phone", "smartphone", "cellphone"}},
        {"microwave", {}},
        {"oven", {}},
        {"toaster", {}},
        {"sink", {}},
        {"refrigerator", {"fridge"}},
        {"book", {}},
        {"clock", {}},
        {"vase", {}},
        {"scissors", {}},
        {"teddy bear", {"teddy"}},
        {"hair drier", {"hair dryer", "hairdryer"}},
        {"toothbrush", {}},
    };
    return Lexicon(entries);
}

}  // namespace halluscope
