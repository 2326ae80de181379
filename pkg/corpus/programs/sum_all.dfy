// Sum of the integer sequence 's'.
ghost function Sum(s: seq<int>): int
{
  if |s| == 0 then 0 else Sum(s[..|s|-1]) + s[|s|-1]
}

// Computes the sum of all elements in 's'.
method SumAll(s: seq<int>) returns (total: int)
  ensures total == Sum(s)
{
  total := 0;
  var i := 0;
  while i < |s|
    invariant 0 <= i <= |s|
    invariant total == Sum(s[..i])
  {
    assert s[..i+1] == s[..i] + [s[i]];
    total := total + s[i];
    i := i + 1;
  }
  assert s[..i] == s;
}

method TestSumAll()
{
  var t := SumAll([1, 2, 3, 4]);
  assert t == 10;
  var z := SumAll([]);
  assert z == 0;
}
