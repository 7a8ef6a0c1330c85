from parallel import *

# Receives a list from the host program, sorts it across all cores with a
# block odd-even transposition sort and sends it back.

def insertion_sort(a, n):
  i=1
  while i<n:
    v=a[i]
    j=i-1
    while j>=0 and a[j]>v:
      a[j+1]=a[j]
      j-=1
    a[j+1]=v
    i+=1

def merge_keep(mine, other, n, m, low):
  out=[0]*n
  if low:
    i=0
    j=0
    k=0
    while k<n:
      if j>=m or (i<n and mine[i]<=other[j]):
        out[k]=mine[i]
        i+=1
      else:
        out[k]=other[j]
        j+=1
      k+=1
  else:
    i=n-1
    j=m-1
    k=n-1
    while k>=0:
      if j<0 or (i>=0 and mine[i]>other[j]):
        out[k]=mine[i]
        i-=1
      else:
        out[k]=other[j]
        j-=1
      k-=1
  return out

def block_size(c, base, extra):
  if c<extra: return base+1
  return base

p=numcores()
host=p
me=coreid()
datalen=0
data=[]
if me==0:
  datalen=recv(host)
  data=recv(host, datalen)
datalen=bcast(datalen, 0)
base=datalen/p
extra=datalen-base*p
n=block_size(me, base, extra)

mine=[]
if me==0:
  start=0
  c=0
  while c<p:
    size=block_size(c, base, extra)
    chunk=[]
    k=0
    while k<size:
      chunk.append(data[start+k])
      k+=1
    if c==0:
      mine=chunk
    elif size>0:
      send(chunk, c, size)
    start=start+size
    c+=1
elif n>0:
  mine=recv(0, n)

insertion_sort(mine, n)

phase=0
while phase<p:
  if (phase+me)%2==0:
    partner=me+1
  else:
    partner=me-1
  if partner>=0 and partner<p:
    m=block_size(partner, base, extra)
    if n>0 and m>0:
      if me<partner:
        send(mine, partner, n)
        other=recv(partner, m)
        mine=merge_keep(mine, other, n, m, 1)
      else:
        other=recv(partner, m)
        send(mine, partner, n)
        mine=merge_keep(mine, other, n, m, 0)
  phase+=1

if me==0:
  result=mine
  c=1
  while c<p:
    size=block_size(c, base, extra)
    if size>0:
      part=recv(c, size)
      k=0
      while k<size:
        result.append(part[k])
        k+=1
    c+=1
  send(result, host, datalen)
elif n>0:
  send(mine, 0, n)
