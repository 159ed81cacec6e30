"""Hand-derived conformance vectors for the Adblock network-rule matcher.

Each entry is (rule text, [(url, resource type, page domain, blocked?), ...]).
Rule text may hold several lines. Page domain ``None`` means no page context.
"""

S = "s.com"  # default page: first party unrelated to every request host below

VECTORS = [
    # || domain anchor with separator
    ("||ads.example.com^", [
        ("https://ads.example.com/x", "other", S, True),
        ("http://ads.example.com/", "other", S, True),
        ("https://sub.ads.example.com/x", "other", S, True),
        ("https://badads.example.com/x", "other", S, False),
        ("https://ads.example.com.evil.net/", "other", S, False),
        ("https://ads.example.com:8080/p", "other", S, True),
        ("https://ads.example.com", "other", S, True),
        ("https://example.com/ads.example.com/", "other", S, False),
        ("https://ads.example.company/", "other", S, False),
        ("https://www.site.com/?u=https://ads.example.com/", "other", S, False),
        ("https://ADS.EXAMPLE.COM/x", "image", S, True),
        ("https://ads.example.com?q=1", "script", S, True),
    ]),
    ("||t.net", [
        ("https://t.net/", "other", S, True),
        ("https://t.network/", "other", S, True),
        ("https://at.net/", "other", S, False),
        ("https://x.t.net/", "other", S, True),
    ]),
    ("||t.net^", [
        ("https://t.network/", "other", S, False),
        ("https://t.net/", "other", S, True),
        ("https://t.net.evil.org/", "other", S, False),
    ]),
    ("||example.com/banner", [
        ("https://example.com/banner.gif", "image", S, True),
        ("https://cdn.example.com/banner/1", "image", S, True),
        ("https://example.com/img/banner", "image", S, False),
        ("https://notexample.com/banner", "image", S, False),
        ("https://example.com/banners/x", "image", S, True),
    ]),
    # | start anchor, | end anchor
    ("|https://track.", [
        ("https://track.io/x", "other", S, True),
        ("http://track.io/", "other", S, False),
        ("https://a.com/?r=https://track.io", "other", S, False),
        ("https://tracker.io/", "other", S, False),
    ]),
    (".gif|", [
        ("https://a.com/x.gif", "image", S, True),
        ("https://a.com/x.gif?x=1", "image", S, False),
        ("https://a.com/x.gifs", "image", S, False),
    ]),
    ("|https://a.com/|", [
        ("https://a.com/", "other", S, True),
        ("https://a.com/x", "other", S, False),
        ("http://a.com/", "other", S, False),
    ]),
    ("||a.com/pixel|", [
        ("https://a.com/pixel", "image", S, True),
        ("https://www.a.com/pixel", "image", S, True),
        ("https://a.com/pixel.gif", "image", S, False),
    ]),
    # * wildcard and ^ separator in plain rules
    ("/banner/*/img^", [
        ("https://a.com/banner/foo/img?x", "image", S, True),
        ("https://a.com/banner/foo/img", "image", S, True),
        ("https://a.com/banner/img", "image", S, False),
        ("https://a.com/banner/a/b/img/", "image", S, True),
        ("https://a.com/banner/x/imgs", "image", S, False),
    ]),
    ("/adserver/*", [
        ("https://a.com/adserver/x", "other", S, True),
        ("https://a.com/xadserver/", "other", S, False),
        ("https://A.COM/AdServer/x", "other", S, True),
        ("https://adserver.com/", "other", S, False),
    ]),
    ("ad*.js", [
        ("https://a.com/adfoo.js", "script", S, True),
        ("https://a.com/a.js", "script", S, False),
        ("https://a.com/head.json", "other", S, True),
        ("https://a.com/ad.js", "script", S, True),
    ]),
    ("*/collect?", [
        ("https://an.net/collect?v=1", "other", S, True),
        ("https://an.net/collector?v=1", "other", S, False),
        ("https://an.net/r/collect", "other", S, False),
    ]),
    ("&uid=^", [
        ("https://x.net/p?a=1&uid=&b", "other", S, True),
        ("https://x.net/p?a=1&uid=", "other", S, True),
        ("https://x.net/p?a=1&uid=7", "other", S, False),
    ]),
    ("^pixel^", [
        ("https://x.net/pixel?a", "image", S, True),
        ("https://x.net/pixel", "image", S, True),
        ("https://x.net/pixels/", "image", S, False),
        ("https://pixel.x.net/", "image", S, False),
        ("https://x.net/a/pixel/", "image", S, True),
    ]),
    ("||cdn.t.net^*/beacon", [
        ("https://cdn.t.net/v1/beacon.js", "script", S, True),
        ("https://cdn.t.net/beacon", "script", S, False),  # ^ consumes the only slash
        ("https://cdn.t.net:443/x/beacon", "script", S, True),
        ("https://cdn.t.net/x/bea", "script", S, False),
    ]),
    ("-ad-banner.", [
        ("https://x.net/top-ad-banner.png", "image", S, True),
        ("https://x.net/top_ad_banner.png", "image", S, False),
    ]),
    ("%20ads", [
        ("https://x.net/a%20ads", "other", S, True),
        ("https://x.net/a ads", "other", S, False),
    ]),
    # $third-party
    ("||t.net^$third-party", [
        ("https://t.net/x", "other", S, True),
        ("https://t.net/x", "other", "t.net", False),
        ("https://px.t.net/x", "image", "t.net", False),
        ("https://t.net/x", "other", None, False),
    ]),
    ("||t.net^$~third-party", [
        ("https://t.net/x", "other", "t.net", True),
        ("https://t.net/x", "other", S, False),
    ]),
    ("||cdn.s.com^$third-party", [
        ("https://cdn.s.com/x.js", "script", "s.com", False),
        ("https://cdn.s.com/x.js", "script", "o.com", True),
    ]),
    ("||shop.co.uk^$third-party", [
        ("https://img.shop.co.uk/a.png", "image", "shop.co.uk", False),
        ("https://img.shop.co.uk/a.png", "image", "other.co.uk", True),
    ]),
    # $domain=
    ("||t.net^$domain=a.com|b.com", [
        ("https://t.net/x", "other", "a.com", True),
        ("https://t.net/x", "other", "b.com", True),
        ("https://t.net/x", "other", "c.com", False),
        ("https://t.net/x", "other", None, False),
        ("https://t.net/x", "other", "aa.com", False),
    ]),
    ("||t.net^$domain=~a.com", [
        ("https://t.net/x", "other", "a.com", False),
        ("https://t.net/x", "other", "c.com", True),
        ("https://t.net/x", "other", None, True),
    ]),
    ("||t.net^$domain=co.uk", [
        ("https://t.net/x", "other", "shop.co.uk", True),
        ("https://t.net/x", "other", "shop.com", False),
    ]),
    ("||t.net^$domain=a.com|~b.com", [
        ("https://t.net/x", "other", "a.com", True),
        ("https://t.net/x", "other", "b.com", False),
        ("https://t.net/x", "other", "c.com", False),
    ]),
    ("||t.net^$domain=A.COM", [
        ("https://t.net/x", "other", "a.com", True),
    ]),
    ("||t.net^$third-party,domain=a.com", [
        ("https://t.net/x", "other", "a.com", True),
        ("https://t.net/x", "other", "t.net", False),
        ("https://t.net/x", "other", "b.com", False),
    ]),
    # resource types
    ("||t.net^$script", [
        ("https://t.net/a.js", "script", S, True),
        ("https://t.net/a.gif", "image", S, False),
        ("https://t.net/a", "other", S, False),
    ]),
    ("||t.net^$image,script", [
        ("https://t.net/a.gif", "image", S, True),
        ("https://t.net/a.js", "script", S, True),
        ("https://t.net/a.css", "stylesheet", S, False),
    ]),
    ("||t.net^$~image", [
        ("https://t.net/a.gif", "image", S, False),
        ("https://t.net/a.js", "script", S, True),
        ("https://t.net/a", "other", S, True),
        ("https://t.net/f", "subdocument", S, True),
    ]),
    ("||t.net^$subdocument", [
        ("https://t.net/frame", "subdocument", S, True),
        ("https://t.net/frame", "other", S, False),
    ]),
    ("||t.net^$xmlhttprequest", [
        ("https://t.net/api", "xmlhttprequest", S, True),
        ("https://t.net/api", "script", S, False),
    ]),
    ("||t.net^$stylesheet", [
        ("https://t.net/a.css", "stylesheet", S, True),
        ("https://t.net/a.css", "other", S, False),
    ]),
    ("||t.net^$other", [
        ("https://t.net/a", "other", S, True),
        ("https://t.net/a", "image", S, False),
    ]),
    ("||t.net^$~script,~image", [
        ("https://t.net/a", "script", S, False),
        ("https://t.net/a", "image", S, False),
        ("https://t.net/a", "stylesheet", S, True),
    ]),
    ("||t.net^$script,third-party", [
        ("https://t.net/a.js", "script", S, True),
        ("https://t.net/a.js", "script", "t.net", False),
        ("https://t.net/a.gif", "image", S, False),
    ]),
    ("||t.net^$IMAGE", [
        ("https://t.net/a.gif", "image", S, True),
    ]),
    ("/img/hero$image,~third-party", [
        ("https://www.s.com/img/hero?x=1", "image", "s.com", True),
        ("https://cdn.o.com/img/hero", "image", "s.com", False),
        ("https://www.s.com/img/hero", "script", "s.com", False),
    ]),
    # @@ exceptions always dominate
    ("||t.net^\n@@||t.net/ok^", [
        ("https://t.net/ok", "other", S, False),
        ("https://t.net/ok/x", "other", S, False),
        ("https://t.net/okay", "other", S, True),
        ("https://t.net/bad", "other", S, True),
    ]),
    ("||t.net^\n@@||t.net^$image", [
        ("https://t.net/a.gif", "image", S, False),
        ("https://t.net/a.js", "script", S, True),
    ]),
    ("||t.net^\n@@||t.net^$domain=a.com", [
        ("https://t.net/a", "other", "a.com", False),
        ("https://t.net/a", "other", "b.com", True),
    ]),
    ("@@||t.net^", [
        ("https://t.net/a", "other", S, False),
    ]),
    ("||t.net/ads/banner.gif\n@@||t.net^", [
        ("https://t.net/ads/banner.gif", "image", S, False),
    ]),
    ("@@||t.net^$third-party\n||t.net^", [
        ("https://t.net/a", "other", S, False),
        ("https://t.net/a", "other", "t.net", True),
    ]),
    ("/ads/*\n@@/ads/allowed/*", [
        ("https://x.org/ads/allowed/a", "other", S, False),
        ("https://x.org/ads/blocked/a", "other", S, True),
    ]),
    ("||t.net^\n@@||t.net^$popup", [
        ("https://t.net/a", "other", S, True),
    ]),
    # inert rules: unsupported options and regex rules never fire
    ("||t.net^$popup", [("https://t.net/a", "other", S, False)]),
    ("||t.net^$third-party,popup", [("https://t.net/a", "other", S, False)]),
    ("||t.net^$csp=script-src 'none'", [("https://t.net/a", "other", S, False)]),
    ("||t.net^$important", [("https://t.net/a", "other", S, False)]),
    ("||t.net^$media", [("https://t.net/a", "other", S, False)]),
    ("/banner[0-9]+/", [("https://x.net/banner12/", "image", S, False),
                        ("https://x.net/banner[0-9]+/", "image", S, False)]),
    ("/track\\.js$/$script", [("https://x.net/track.js", "script", S, False)]),
    # slash-delimited text is a regex rule even when it reads like a path
    ("/adserver/", [("https://a.com/adserver/x", "other", S, False)]),
    ("||t.net^\n@@/allowed/", [("https://t.net/allowed/a", "other", S, True)]),
    # comments, headers, cosmetics
    ("! ||t.net^", [("https://t.net/a", "other", S, False)]),
    ("[Adblock Plus 2.0]", [("https://t.net/a", "other", S, False)]),
    ("t.net##.ad", [("https://t.net/a", "other", S, False)]),
    ("##.banner", [("https://x.net/banner", "other", S, False)]),
    ("t.net#@#.ad", [("https://t.net/a", "other", S, False)]),
    ("t.net#?#div:-abp-has(.ad)", [("https://t.net/a", "other", S, False)]),
    # several blocking rules: any match blocks
    ("||a.net^\n||b.net^\n/ads/*", [
        ("https://a.net/", "other", S, True),
        ("https://b.net/", "other", S, True),
        ("https://c.net/ads/x", "other", S, True),
        ("https://c.net/x", "other", S, False),
    ]),
    # separator edge cases
    ("||t.net^x", [
        ("https://t.net/x", "other", S, True),
        ("https://t.net?x", "other", S, True),
        ("https://t.net.x/", "other", S, False),
    ]),
    ("||t.net^*.gif", [
        ("https://t.net/a/b.gif", "image", S, True),
        ("https://t.net/a/b.png", "image", S, False),
    ]),
    ("_ad_", [
        ("https://x.net/top_ad_1.png", "image", S, True),
        ("https://x.net/top-ad-1.png", "image", S, False),
    ]),
]


def flat():
    for rule, cases in VECTORS:
        for url, rtype, page_domain, expected in cases:
            yield rule, url, rtype, page_domain, expected
