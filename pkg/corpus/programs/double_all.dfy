// Returns a sequence with each element of 's' doubled.
method DoubleAll(s: seq<int>) returns (r: seq<int>)
  ensures |r| == |s|
  ensures forall i :: 0 <= i < |s| ==> r[i] == 2 * s[i]
{
  r := [];
  var i := 0;
  while i < |s|
    invariant 0 <= i <= |s|
    invariant |r| == i
    invariant forall k :: 0 <= k < i ==> r[k] == 2 * s[k]
  {
    r := r + [2 * s[i]];
    i := i + 1;
  }
}

method TestDoubleAll()
{
  var r := DoubleAll([1, 2, 3]);
  assert r == [2, 4, 6];
  var e := DoubleAll([]);
  assert |e| == 0;
}
